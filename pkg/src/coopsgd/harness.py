"""Experiment runner: sweeps, per-run artifacts and bound-vs-measurement rows."""
from __future__ import annotations

import csv
import json
import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bounds import (BoundInputs, corollary1_lr, report, report_dict, sigma_comparison_term,
                     varsigma_table)
from .config import ExperimentConfig, is_quadratic, point_hash
from .errors import DivergenceError
from .mixing import build_easgd, delta_of
from .objectives import GradientOracle
from .selection import select, selected_count
from .trainer import (RunConfig, config_echo, initial_model, participation, run, summary,
                      write_trace_csv)

log = logging.getLogger(__name__)

COMPARISON_HEADER = ("point", "seed", "algorithm", "tau", "c", "init_scale", "eta", "status",
                     "measured", "bound_kind", "bound", "delta", "lr_ok", "p_ok", "c_ok", "k_ok",
                     "satisfied", "final_loss")
MIN_COMPARE_SEEDS = 5


@dataclass
class ComparisonRecord:
    config: dict
    measured: float
    bound: float
    bound_kind: str
    flags: dict
    status: str = "ok"
    final_loss: float = math.nan
    delta: float = 0.0

    @property
    def satisfied(self) -> bool | None:
        """measured <= bound, or None when a validity condition fails or the run diverged."""
        if self.status != "ok" or not all(self.flags.values()):
            return None
        return bool(self.measured <= self.bound)


@dataclass
class ModeResult:
    mode: str
    records: list = field(default_factory=list)

    @property
    def final_losses(self) -> list[float]:
        return [r.final_loss for r in self.records if r.status == "ok"]

    @property
    def median_final_loss(self) -> float:
        vals = self.final_losses
        return statistics.median(vals) if vals else math.nan


def _selection_c(rc: RunConfig, m: int) -> float:
    if rc.selection.kind == "all":
        return 1.0
    return selected_count(rc.selection.c, m) / m


def schedule_delta(rc: RunConfig, m: int, count_structural_zeros: bool = True) -> float:
    """Largest delta over the matrices the schedule emits during K iterations (no simulation)."""
    if rc.algorithm == "easgd":
        return delta_of(build_easgd(m, rc.alpha), 1.0, count_structural_zeros)
    sched = rc.schedule_for(m)
    if sched.n < 2:
        return 0.0
    tau = rc.effective_tau()
    best = 0.0
    for k in range(tau, rc.K + 1, tau):
        sel = select(rc.selection, (k - 1) // tau, m)
        w = sched.mixing_at(k, sel)
        best = max(best, delta_of(w, participation(len(sel), m, sched.v), count_structural_zeros))
    return best


def bound_inputs(cfg: ExperimentConfig, suite, rc: RunConfig, delta: float) -> BoundInputs:
    """Constants for the bound at the run's starting point.

    For logistic objectives sigma and kappa are estimated at the initial model.
    """
    m = suite.m
    x1 = initial_model(suite.d, rc.init, rc.init_scale, rc.init_seed)
    if is_quadratic(suite):
        sigma, kappa, f_inf = suite.sigma, suite.kappa, suite.f_inf
    else:
        sigma = math.sqrt(suite.minibatch_variance(x1))
        kappa = math.sqrt(suite.dissimilarity_sq(x1))
        f_inf = suite.f_inf
    n = m + rc.aux_count()
    return BoundInputs(
        L=suite.smoothness, sigma=sigma, kappa=kappa, F_u1=suite.global_loss(x1), F_inf=f_inf,
        eta=rc.eta, K=rc.K, tau=rc.effective_tau(), c=_selection_c(rc, m), m=m,
        v=rc.aux_count(), delta=delta, X1_frob_sq=float(n * (x1 @ x1)),
        x1_term_over_k=cfg.x1_term_over_k,
    )


def _bound_kind(inp: BoundInputs) -> str:
    return "niid" if inp.kappa > 0 else "iid"


def _dump(obj, path: Path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def _point_values(rc: RunConfig) -> dict:
    return {"algorithm": rc.algorithm, "tau": rc.tau, "c": rc.selection.c,
            "init_scale": rc.init_scale, "eta": rc.eta}


def run_single(cfg: ExperimentConfig, point: dict, seed: int, out: Path | None = None,
               suite=None) -> ComparisonRecord:
    """One (sweep point, seed) run; artifacts go to ``out/<hash>/<seed>/`` when given."""
    suite = suite if suite is not None else cfg.build_suite()
    rc = cfg.build_run_config(point, seed, suite)
    noise, sigma = cfg.noise_model()
    oracle = GradientOracle(suite, sigma, seed, noise=noise)
    status = "ok"
    try:
        trace = run(rc, suite, oracle)
    except DivergenceError as exc:
        status = "diverged"
        trace = exc.trace
        log.warning("run diverged at k=%s (point=%s seed=%s)", exc.k, point, seed)

    measured = trace.running_mean if status == "ok" else math.nan
    # the schedule is keyed, so replaying it gives exactly the matrices the run used
    delta = schedule_delta(rc, suite.m, cfg.count_structural_zeros)
    inp = bound_inputs(cfg, suite, rc, delta)
    rep = report(inp)
    kind = _bound_kind(inp)
    bound = rep.epsilon_niid if kind == "niid" else rep.epsilon_iid
    flags = {"lr_ok": rep.lr_ok, "p_ok": rep.p_ok, "c_ok": rep.c_ok, "k_ok": rep.k_ok}
    rec = ComparisonRecord(config={"point": point, "seed": seed, **_point_values(rc)},
                           measured=measured, bound=bound, bound_kind=kind, flags=flags,
                           status=status, final_loss=trace.final_loss if status == "ok" else math.nan,
                           delta=delta)
    if out is not None:
        run_dir = Path(out) / point_hash(point) / str(seed)
        run_dir.mkdir(parents=True, exist_ok=True)
        write_trace_csv(trace, run_dir / "trace.csv")
        summ = summary(trace, rc) if trace.final_state is not None else \
            {"iterations": len(trace), "config": config_echo(rc)}
        summ["status"] = status
        summ["point"] = point
        summ["seed"] = seed
        _dump(summ, run_dir / "summary.json")
        rd = report_dict(inp)
        rd["bound_kind"] = kind
        rd["measured"] = measured
        rd["satisfied"] = rec.satisfied
        _dump(rd, run_dir / "bounds.json")
    return rec


def _worker(args):
    raw, base_dir, point, seed, out = args
    cfg = ExperimentConfig(raw, Path(base_dir))
    return run_single(cfg, point, seed, out)


def _row(rec: ComparisonRecord) -> list:
    c = rec.config
    return [point_hash(c["point"]), c["seed"], c["algorithm"], c["tau"], c["c"], c["init_scale"],
            repr(c["eta"]), rec.status, repr(rec.measured), rec.bound_kind, repr(rec.bound),
            repr(rec.delta), *(int(rec.flags[f]) for f in ("lr_ok", "p_ok", "c_ok", "k_ok")),
            "" if rec.satisfied is None else int(rec.satisfied), repr(rec.final_loss)]


def write_comparison_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COMPARISON_HEADER)
        for rec in records:
            w.writerow(_row(rec))


def run_records(cfg: ExperimentConfig, out: Path | None = None, jobs: int = 1) -> list:
    tasks = [(p, s) for p in cfg.sweep_points() for s in cfg.seeds]
    if jobs > 1 and len(tasks) > 1:
        args = [(cfg.raw, str(cfg.base_dir), p, s, out) for p, s in tasks]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_worker, args))
    suite = cfg.build_suite()
    return [run_single(cfg, p, s, out, suite) for p, s in tasks]


def run_experiment(config, out, jobs: int = 1) -> list:
    """Run every sweep point for every seed and write the aggregate comparison.csv."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.load(config)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    records = run_records(cfg, out, jobs)
    write_comparison_csv(records, out / "comparison.csv")
    return records


def bounds_only(config) -> dict:
    """Bound reports for every sweep point without simulating (first seed)."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.load(config)
    suite = cfg.build_suite()
    seed = cfg.seeds[0]
    points = []
    for point in cfg.sweep_points():
        rc = cfg.build_run_config(point, seed, suite)
        delta = schedule_delta(rc, suite.m, cfg.count_structural_zeros)
        inp = bound_inputs(cfg, suite, rc, delta)
        rd = report_dict(inp)
        rd["bound_kind"] = _bound_kind(inp)
        rd["point"] = point
        cor = corollary1_lr(inp.L, inp.c, inp.m, inp.v, inp.K, inp.delta) if inp.L > 0 else None
        rd["corollary1"] = asdict(cor) if cor else None
        points.append(rd)
    doc = {"name": cfg.name, "seed": seed, "points": points}
    if cfg.varsigma is not None:
        tau = cfg.build_run_config({}, seed, suite).effective_tau()
        value, threshold = sigma_comparison_term(cfg.varsigma, tau)
        doc["varsigma"] = {"varsigma": cfg.varsigma, "tau": tau, "comparison_term": value,
                           "threshold": threshold, "quoted_examples": varsigma_table(tau)}
    return doc


def compare_selection_modes(config, out=None, jobs: int = 1) -> tuple[ModeResult, ModeResult]:
    """Per-round against static random selection with matched seeds."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.load(config)
    seeds = cfg.seeds
    if len(seeds) < MIN_COMPARE_SEEDS:
        log.warning("only %d seed(s); medians over fewer than %d runs are fragile",
                    len(seeds), MIN_COMPARE_SEEDS)
    results = []
    for mode in ("per-round-random", "static-random"):
        variant = cfg.with_overrides(selection={"kind": mode})
        sub = Path(out) / mode if out is not None else None
        if sub is not None:
            sub.mkdir(parents=True, exist_ok=True)
        recs = run_records(variant, sub, jobs)
        if sub is not None:
            write_comparison_csv(recs, sub / "comparison.csv")
        results.append(ModeResult(mode, recs))
    if out is not None:
        _dump({r.mode: {"median_final_loss": r.median_final_loss, "final_losses": r.final_losses,
                        "seeds": seeds} for r in results}, Path(out) / "selection_comparison.json")
    return results[0], results[1]


def all_diverged(records) -> bool:
    return bool(records) and all(r.status != "ok" for r in records)


def estimate_constants(suite, x) -> dict:
    """sigma^2 and kappa^2 estimates at ``x`` for suites without closed forms."""
    x = np.asarray(x, dtype=float)
    if is_quadratic(suite):
        return {"sigma_sq": suite.sigma ** 2, "kappa_sq": suite.kappa_sq}
    return {"sigma_sq": suite.minibatch_variance(x), "kappa_sq": suite.dissimilarity_sq(x)}
