"""Unified local-SGD engine: X_{k+1} = (X_k - eta G_k) S_k^T.

Iterations are numbered 1..K. Iteration k aggregates when ``k % tau == 0`` and
uses the selection of round ``(k - 1) // tau``.

Two views of the state are kept apart. ``step`` is the bookkeeping update in
which unselected clients are zeroed before mixing; it is what the averaged
model recursion describes. ``run`` owns the runtime state in which every
client holds a model: unselected clients keep their stale model unless the
mixing step sends them weight, and after a consensus aggregation every client
receives the aggregate.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DivergenceError
from .mixing import MixingSchedule, delta_of, is_consensus
from .objectives import GradientOracle
from .selection import SelectionPolicy, SelectionSet, select

ALGORITHMS = ("unified", "psasgd", "dpsgd", "fully-sync", "easgd")
DIVERGENCE_LIMIT = 1e12
_INIT_TAG = 0x1417


@dataclass
class StateMatrix:
    """d x (m+v) matrix: client models first, then auxiliary variables."""

    data: np.ndarray
    m: int

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2:
            raise ValueError("state must be a d x (m+v) matrix")
        if not 1 <= self.m <= self.data.shape[1]:
            raise ValueError(f"m={self.m} incompatible with {self.data.shape[1]} columns")

    @property
    def d(self) -> int:
        return self.data.shape[0]

    @property
    def v(self) -> int:
        return self.data.shape[1] - self.m

    @property
    def n(self) -> int:
        return self.data.shape[1]

    def copy(self) -> StateMatrix:
        return StateMatrix(self.data.copy(), self.m)


def averaged_model(x) -> np.ndarray:
    """u = X 1 / (m+v)."""
    data = x.data if isinstance(x, StateMatrix) else np.asarray(x, dtype=float)
    return data.sum(axis=1) / data.shape[1]


def consensus_error(x) -> float:
    """||X (I - J)||_F^2."""
    data = x.data if isinstance(x, StateMatrix) else np.asarray(x, dtype=float)
    dev = data - averaged_model(data)[:, None]
    return float(np.sum(dev * dev))


def gradient_matrix(x: StateMatrix, oracle, sel: SelectionSet, k: int) -> np.ndarray:
    """G_k: gradients of selected clients, zero for everyone else."""
    g = np.zeros_like(x.data)
    for i in sel.members:
        gi = oracle.grad(i, x.data[:, i], k)
        if not np.all(np.isfinite(gi)):
            raise DivergenceError(k, f"non-finite gradient from client {i}")
        g[:, i] = gi
    return g


def step(x: StateMatrix, oracle, s_matrix, sel: SelectionSet, eta: float, k: int,
         g: np.ndarray | None = None) -> StateMatrix:
    """One bookkeeping update (X_k - eta G_k) S_k^T with unselected clients zeroed."""
    if eta < 0:
        raise ConfigError("eta must be >= 0")
    xz = x.data.copy()
    drop = [j for j in range(x.m) if j not in sel.members]
    xz[:, drop] = 0.0
    if g is None:
        g = gradient_matrix(StateMatrix(xz, x.m), oracle, sel, k)
    s = np.asarray(s_matrix, dtype=float)
    return StateMatrix((xz - eta * g) @ s.T, x.m)


def easgd_update(x, z, g, eta: float, alpha: float, k: int, tau: int):
    """Elastic-averaging step on client models ``x`` (d x m) and anchor ``z`` (d,)."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    g = np.asarray(g, dtype=float)
    m = x.shape[1]
    if not 0 <= m * alpha <= 1:
        raise ConfigError(f"need 0 <= m*alpha <= 1, got {m * alpha}", "run.alpha")
    if k % tau == 0:
        x_bar = x.mean(axis=1)
        x_new = x - eta * g - alpha * (x - z[:, None])
        z_new = (1.0 - m * alpha) * z + m * alpha * x_bar
        return x_new, z_new
    return x - eta * g, z.copy()


@dataclass
class RunConfig:
    algorithm: str = "unified"
    eta: float = 0.1
    tau: int = 1
    K: int = 100
    selection: SelectionPolicy = field(default_factory=SelectionPolicy)
    schedule: MixingSchedule | None = None
    alpha: float = 0.0
    v: int = 0
    init: str = "zero"
    init_scale: float = 1.0
    init_seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}", "run.algorithm")
        if self.K < 1:
            raise ConfigError("K must be >= 1", "run.K")
        if not self.eta > 0:
            raise ConfigError("eta must be > 0", "run.eta")
        if self.tau < 1:
            raise ConfigError("tau must be >= 1", "run.tau")
        if self.init not in ("zero", "scaled"):
            raise ConfigError(f"unknown init {self.init!r}", "run.init")
        if self.algorithm == "dpsgd" and (self.schedule is None or self.schedule.kind != "static"):
            raise ConfigError("dpsgd needs a static mixing matrix", "mixing.kind")
        if self.algorithm == "easgd" and self.selection.kind != "all":
            raise ConfigError("easgd runs with every client selected", "selection.kind")

    def effective_tau(self) -> int:
        return 1 if self.algorithm in ("fully-sync", "dpsgd") else self.tau

    def aux_count(self) -> int:
        if self.algorithm == "easgd":
            return 1
        return self.v if self.algorithm == "unified" else 0

    def schedule_for(self, m: int) -> MixingSchedule:
        """The schedule the run actually uses for ``m`` clients."""
        tau, v = self.effective_tau(), self.aux_count()
        if self.algorithm in ("fully-sync", "psasgd"):
            return MixingSchedule("uniform-J", tau, m, 0)
        if self.algorithm == "easgd":
            return MixingSchedule("uniform-J", tau, m, 1)
        if self.schedule is None:
            return MixingSchedule("uniform-J", tau, m, v)
        s = self.schedule
        if s.m != m or s.v != v:
            raise ConfigError(f"schedule is sized for m={s.m}, v={s.v}; run has m={m}, v={v}",
                              "mixing")
        return MixingSchedule(s.kind, tau, m, v, s.seed, list(s.matrices), s.concentration, s.blend)


def participation(selected: int, m: int, v: int) -> float:
    """Fraction of the m+v columns that are nonzero in a mixing matrix.

    This is the c that makes the delta bound hold once auxiliaries are present;
    for v=0 it is the usual client fraction.
    """
    return (selected + v) / (m + v)


def initial_model(d: int, init: str, scale: float = 1.0, seed: int = 0) -> np.ndarray:
    if init == "zero":
        return np.zeros(d)
    base = np.random.default_rng([seed, _INIT_TAG]).standard_normal(d)
    return scale * base


@dataclass
class IterationRecord:
    k: int
    loss: float
    grad_norm_sq: float
    consensus_sq: float
    aggregated: bool
    selected: tuple[int, ...]
    identity_residual: float = 0.0
    delta: float | None = None


@dataclass
class RunTrace:
    records: list = field(default_factory=list)
    final_state: StateMatrix | None = None
    final_loss: float = float("nan")
    final_grad_norm_sq: float = float("nan")
    deltas: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def running_mean(self) -> float:
        """(1/K) sum_k ||grad F(u_k)||^2 over recorded iterations."""
        if not self.records:
            return float("nan")
        return float(np.mean([r.grad_norm_sq for r in self.records]))

    @property
    def max_identity_residual(self) -> float:
        return max((r.identity_residual for r in self.records), default=0.0)

    @property
    def max_delta(self) -> float:
        return max(self.deltas, default=0.0)


def _check_finite(data: np.ndarray, k: int, trace: RunTrace):
    if not np.all(np.isfinite(data)) or np.max(np.abs(data), initial=0.0) > DIVERGENCE_LIMIT:
        raise DivergenceError(k, trace=trace)


def run(config: RunConfig, suite, oracle: GradientOracle | None = None,
        x1: np.ndarray | None = None, track_delta: bool = False,
        delta_c: float | None = None) -> RunTrace:
    """Execute K iterations and record the averaged-model metrics.

    ``x1`` overrides the initial model shared by all columns. With
    ``track_delta`` the delta bound of every emitted W_k is recorded, using
    ``delta_c`` or else the participating column fraction.
    """
    m, d = suite.m, suite.d
    if oracle is None:
        oracle = GradientOracle(suite, getattr(suite, "sigma", 0.0) or 0.0)
    tau = config.effective_tau()
    v = config.aux_count()
    schedule = config.schedule_for(m)
    if config.algorithm == "easgd" and not 0 < m * config.alpha <= 1:
        raise ConfigError(f"need 0 < m*alpha <= 1, got {m * config.alpha}", "run.alpha")
    start = initial_model(d, config.init, config.init_scale, config.init_seed) if x1 is None \
        else np.asarray(x1, dtype=float)
    x = StateMatrix(np.tile(start[:, None], (1, m + v)), m)
    trace = RunTrace()
    for k in range(1, config.K + 1):
        sel = select(config.selection, (k - 1) // tau, m)
        u = averaged_model(x)
        gu = suite.global_grad(u)
        aggregated = k % tau == 0
        rec = IterationRecord(k, suite.global_loss(u), float(gu @ gu), consensus_error(x),
                              aggregated, sel.members)
        trace.records.append(rec)

        xz = x.data.copy()
        drop = [j for j in range(m) if j not in sel.members]
        xz[:, drop] = 0.0
        g = gradient_matrix(StateMatrix(xz, m), oracle, sel, k)

        if config.algorithm == "easgd":
            xm, zn = easgd_update(xz[:, :m], xz[:, m], g[:, :m], config.eta, config.alpha, k, tau)
            new = np.column_stack([xm, zn])
            w = None
        else:
            mix = schedule.mixing_at(k, sel) if aggregated else None
            s = mix.w if mix is not None else np.eye(m + v)
            new = step(StateMatrix(xz, m), oracle, s, sel, config.eta, k, g=g).data
            w = mix
            if mix is not None and track_delta:
                c_used = delta_c if delta_c is not None else participation(len(sel), m, v)
                rec.delta = delta_of(mix, c_used)
                trace.deltas.append(rec.delta)

        eta_eff = len(sel) / (m + v) * config.eta
        expected = xz.sum(axis=1) / (m + v) - eta_eff * g.sum(axis=1) / len(sel)
        rec.identity_residual = float(np.linalg.norm(averaged_model(new) - expected))

        # runtime view: who actually holds what after this iteration
        if w is not None and is_consensus(w.w):
            agg_row = next(r for r in w.w if np.any(r))
            agg = (xz - config.eta * g) @ agg_row
            new[:, :m] = agg[:, None]
        else:
            s_rows = w.w if w is not None else np.eye(m + v)
            participants = list(sel.members) + list(range(m, m + v))
            for j in drop:
                if not np.any(s_rows[j, participants]):
                    new[:, j] = x.data[:, j]
        _check_finite(new, k, trace)
        x = StateMatrix(new, m)

    trace.final_state = x
    u = averaged_model(x)
    gu = suite.global_grad(u)
    trace.final_loss = suite.global_loss(u)
    trace.final_grad_norm_sq = float(gu @ gu)
    return trace


CSV_HEADER = ("k", "loss", "grad_norm_sq", "consensus_sq", "aggregated", "selected")


def write_trace_csv(trace: RunTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in trace.records:
            w.writerow([r.k, repr(r.loss), repr(r.grad_norm_sq), repr(r.consensus_sq),
                        int(r.aggregated), ";".join(str(i) for i in r.selected)])


def read_trace_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        out.append({
            "k": int(row["k"]),
            "loss": float(row["loss"]),
            "grad_norm_sq": float(row["grad_norm_sq"]),
            "consensus_sq": float(row["consensus_sq"]),
            "aggregated": row["aggregated"] == "1",
            "selected": tuple(int(i) for i in row["selected"].split(";") if i),
        })
    return out


def config_echo(config: RunConfig) -> dict:
    out = {
        "algorithm": config.algorithm, "eta": config.eta, "tau": config.tau, "K": config.K,
        "selection": asdict(config.selection), "alpha": config.alpha, "v": config.v,
        "init": config.init, "init_scale": config.init_scale, "init_seed": config.init_seed,
    }
    if config.schedule is not None:
        s = config.schedule
        out["mixing"] = {"kind": s.kind, "seed": s.seed, "concentration": s.concentration,
                         "blend": s.blend, "matrices": [w.tolist() for w in s.matrices]}
    return out


def summary(trace: RunTrace, config: RunConfig) -> dict:
    return {
        "iterations": len(trace),
        "running_mean_grad_norm_sq": trace.running_mean,
        "final_loss": trace.final_loss,
        "final_grad_norm_sq": trace.final_grad_norm_sq,
        "final_consensus_sq": consensus_error(trace.final_state) if trace.final_state else None,
        "aggregations": sum(r.aggregated for r in trace.records),
        "max_identity_residual": trace.max_identity_residual,
        "config": config_echo(config),
    }


def write_summary_json(trace: RunTrace, config: RunConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary(trace, config), fh, indent=2, sort_keys=True)
        fh.write("\n")

