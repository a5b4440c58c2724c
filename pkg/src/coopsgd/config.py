"""Experiment configuration: TOML documents with one table per concern.

Recognised tables and keys (everything optional unless noted)::

    [objective]   kind ("quadratic" | "logistic"), d, m (required), seed,
                  spectrum | spectrum_range, kappa, sigma, mean_scale,
                  n_samples, partition ("iid" | "dirichlet"), alpha, batch_size,
                  l2, f_inf, csv
    [run]         algorithm, eta | eta_eff_L, tau, K, alpha, v, init,
                  init_scale, init_seed
    [mixing]      kind, matrix, matrices, matrix_file, seed, concentration,
                  blend, count_structural_zeros
    [selection]   kind, c, seed
    [experiment]  seeds, name
    [sweep]       tau, c, init_scale, eta   (lists; the cartesian product is run)
    [bounds]      varsigma, x1_term_over_k
"""
from __future__ import annotations

import copy
import hashlib
import itertools
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from .errors import ConfigError
from .mixing import MixingSchedule, from_json
from .objectives import (QuadraticSuite, linear_spectrum, load_csv_dataset, make_logistic,
                         make_quadratic)
from .selection import SelectionPolicy, selected_count
from .trainer import RunConfig

SWEEP_AXES = ("tau", "c", "init_scale", "eta")
SEED_ENV = "COOPSGD_SEED"

_KNOWN = {
    "objective": {"kind", "d", "m", "seed", "spectrum", "spectrum_range", "kappa", "sigma",
                  "mean_scale", "n_samples", "partition", "alpha", "batch_size", "l2", "f_inf",
                  "csv"},
    "run": {"algorithm", "eta", "eta_eff_L", "tau", "K", "alpha", "v", "init", "init_scale",
            "init_seed"},
    "mixing": {"kind", "matrix", "matrices", "matrix_file", "seed", "concentration", "blend",
               "count_structural_zeros"},
    "selection": {"kind", "c", "seed"},
    "experiment": {"seeds", "name"},
    "sweep": set(SWEEP_AXES),
    "bounds": {"varsigma", "x1_term_over_k"},
}


def _get(table: dict, key: str, path: str, kind, default=None, required=False):
    if key not in table:
        if required:
            raise ConfigError("missing required field", f"{path}.{key}")
        return default
    val = table[key]
    if kind is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if kind is not None and not isinstance(val, kind) or isinstance(val, bool) and kind in (int, float):
        name = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise ConfigError(f"expected {name}, got {type(val).__name__}", f"{path}.{key}")
    return val


@dataclass
class ExperimentConfig:
    raw: dict
    base_dir: Path = field(default_factory=Path.cwd)

    # -- parsing -------------------------------------------------------------
    @classmethod
    def from_text(cls, text: str, base_dir=None) -> ExperimentConfig:
        try:
            raw = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse config: {exc}") from exc
        cfg = cls(raw, Path(base_dir) if base_dir else Path.cwd())
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text, path.parent)

    def table(self, name: str) -> dict:
        t = self.raw.get(name, {})
        if not isinstance(t, dict):
            raise ConfigError("expected a table", name)
        return t

    def validate(self) -> None:
        for name, t in self.raw.items():
            if name not in _KNOWN:
                raise ConfigError("unknown table", name)
            if not isinstance(t, dict):
                raise ConfigError("expected a table", name)
            for key in t:
                if key not in _KNOWN[name]:
                    raise ConfigError("unknown field", f"{name}.{key}")
        seeds = self.seeds
        if not seeds:
            raise ConfigError("seed list must be non-empty", "experiment.seeds")
        sweep = self.table("sweep")
        for axis, values in sweep.items():
            if not isinstance(values, list) or not values:
                raise ConfigError("sweep axis must be a non-empty list", f"sweep.{axis}")
        # build everything once per sweep point so errors surface before any run starts
        suite = self.build_suite()
        for point in self.sweep_points():
            self.build_run_config(point, seeds[0], suite)

    # -- accessors -----------------------------------------------------------
    @property
    def seeds(self) -> list[int]:
        env = os.environ.get(SEED_ENV)
        if env is not None and env.strip():
            try:
                return [int(env)]
            except ValueError:
                raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
        seeds = self.table("experiment").get("seeds", [0])
        if not isinstance(seeds, list) or not all(isinstance(s, int) and not isinstance(s, bool)
                                                  for s in seeds):
            raise ConfigError("expected a list of integers", "experiment.seeds")
        return seeds

    @property
    def name(self) -> str:
        return str(self.table("experiment").get("name", "experiment"))

    def sweep_points(self) -> list[dict]:
        sweep = self.table("sweep")
        axes = [a for a in SWEEP_AXES if a in sweep]
        return [dict(zip(axes, combo)) for combo in itertools.product(*(sweep[a] for a in axes))]

    def with_overrides(self, **tables) -> ExperimentConfig:
        raw = copy.deepcopy(self.raw)
        for name, updates in tables.items():
            raw.setdefault(name, {}).update(updates)
        cfg = ExperimentConfig(raw, self.base_dir)
        cfg.validate()
        return cfg

    # -- builders --------------------------------------------------------------
    def build_suite(self):
        t = self.table("objective")
        p = "objective"
        kind = _get(t, "kind", p, str, "quadratic")
        m = _get(t, "m", p, int, required=True)
        if m < 1:
            raise ConfigError("must be >= 1", f"{p}.m")
        seed = _get(t, "seed", p, int, 0)
        if kind == "quadratic":
            d = _get(t, "d", p, int, required=True)
            if d < 1:
                raise ConfigError("must be >= 1", f"{p}.d")
            if "spectrum" in t:
                spectrum = _get(t, "spectrum", p, list)
            else:
                lo, hi = _get(t, "spectrum_range", p, list, [0.1, 1.0])
                spectrum = linear_spectrum(d, float(lo), float(hi))
            sigma = _get(t, "sigma", p, float, 0.0)
            if sigma < 0:
                raise ConfigError("must be >= 0", f"{p}.sigma")
            return make_quadratic(d, m, spectrum, _get(t, "kappa", p, float, 0.0), seed,
                                  sigma=sigma, mean_scale=_get(t, "mean_scale", p, float, 1.0))
        if kind == "logistic":
            data = None
            if "csv" in t:
                data = load_csv_dataset(self.base_dir / _get(t, "csv", p, str))
            d = _get(t, "d", p, int, None if data is not None else 10)
            n = _get(t, "n_samples", p, int, 2000)
            partition = _get(t, "partition", p, str, "iid")
            alpha = _get(t, "alpha", p, float, 0.6)
            return make_logistic(n, d if data is None else data[0].shape[1], m, seed,
                                 partition, alpha, _get(t, "batch_size", p, int, 16),
                                 _get(t, "l2", p, float, 0.0), _get(t, "f_inf", p, float, 0.0),
                                 data=data)
        raise ConfigError(f"unknown objective kind {kind!r}", f"{p}.kind")

    def noise_model(self) -> tuple[str, float]:
        t = self.table("objective")
        if t.get("kind", "quadratic") == "logistic":
            return "minibatch", 0.0
        return "gaussian", float(t.get("sigma", 0.0))

    def _matrices(self, t: dict, n: int) -> list:
        p = "mixing"
        if "matrix_file" in t:
            path = self.base_dir / _get(t, "matrix_file", p, str)
            try:
                doc = path.read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read {path}: {exc}", f"{p}.matrix_file") from exc
            return [from_json(doc).w]
        if "matrix" in t:
            return [np.array(_get(t, "matrix", p, list), dtype=float)]
        if "matrices" in t:
            return [np.array(w, dtype=float) for w in _get(t, "matrices", p, list)]
        return []

    def build_run_config(self, point: dict, seed: int, suite=None) -> RunConfig:
        suite = suite if suite is not None else self.build_suite()
        m = suite.m
        rt, st, mt = self.table("run"), self.table("selection"), self.table("mixing")
        sel_c = float(point.get("c", _get(st, "c", "selection", float, 1.0)))
        sel_kind = _get(st, "kind", "selection", str, "all" if sel_c == 1.0 else "per-round-random")
        policy = SelectionPolicy(sel_kind, sel_c, seed + _get(st, "seed", "selection", int, 0))
        c_real = 1.0 if sel_kind == "all" else selected_count(sel_c, m) / m

        algorithm = _get(rt, "algorithm", "run", str, "unified")
        tau = int(point.get("tau", _get(rt, "tau", "run", int, 1)))
        v = _get(rt, "v", "run", int, 0)
        if v < 0:
            raise ConfigError("must be >= 0", "run.v")
        aux = 1 if algorithm == "easgd" else (v if algorithm == "unified" else 0)

        if "eta" in point:
            eta = float(point["eta"])
        elif "eta" in rt:
            eta = _get(rt, "eta", "run", float)
        elif "eta_eff_L" in rt:
            target = _get(rt, "eta_eff_L", "run", float)
            eta = target * (m + aux) / (c_real * m * suite.smoothness)
        else:
            raise ConfigError("need eta or eta_eff_L", "run.eta")

        schedule = None
        if mt or algorithm in ("unified", "dpsgd"):
            kind = _get(mt, "kind", "mixing", str, "uniform-J")
            n = m + aux
            mats = self._matrices(mt, n)
            schedule = MixingSchedule(
                kind, tau, m, aux, seed + _get(mt, "seed", "mixing", int, 0), mats,
                _get(mt, "concentration", "mixing", float, 1.0), _get(mt, "blend", "mixing", float, 1.0))
        return RunConfig(
            algorithm=algorithm, eta=eta, tau=tau, K=_get(rt, "K", "run", int, 100),
            selection=policy, schedule=schedule, alpha=_get(rt, "alpha", "run", float, 0.0), v=v,
            init=_get(rt, "init", "run", str, "zero"),
            init_scale=float(point.get("init_scale", _get(rt, "init_scale", "run", float, 1.0))),
            init_seed=_get(rt, "init_seed", "run", int, 0),
        )

    @property
    def count_structural_zeros(self) -> bool:
        return bool(self.table("mixing").get("count_structural_zeros", True))

    @property
    def x1_term_over_k(self) -> bool:
        return bool(self.table("bounds").get("x1_term_over_k", False))

    @property
    def varsigma(self) -> float | None:
        v = self.table("bounds").get("varsigma")
        return None if v is None else float(v)


def point_hash(point: dict) -> str:
    blob = json.dumps(point, sort_keys=True).encode()
    return hashlib.sha1(blob).hexdigest()[:12]


def is_quadratic(suite) -> bool:
    return isinstance(suite, QuadraticSuite)
