"""Column-stochastic mixing matrices, the delta bound and round schedules.

Entry ``w[i, j]`` is the weight of node ``i`` in the aggregate sent to node
``j``. Columns of unselected clients are identically zero. The first ``m``
indices are clients, the trailing ``v`` are auxiliary variables.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DimensionError
from .matrix import as_dense, j_matrix
from .selection import SelectionSet

SCHEDULE_KINDS = ("static", "periodic-list", "seeded-random-family", "uniform-J")

_FAMILY_TAG = 0xD1C1


@dataclass(frozen=True)
class MixingMatrix:
    w: np.ndarray
    selected: tuple[int, ...]
    m: int

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @property
    def v(self) -> int:
        return self.n - self.m

    @property
    def participants(self) -> tuple[int, ...]:
        return tuple(self.selected) + tuple(range(self.m, self.n))


@dataclass(frozen=True)
class Verdict:
    ok: bool
    violation: str | None = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.ok


def _members(selected) -> tuple[int, ...]:
    if isinstance(selected, SelectionSet):
        return selected.members
    return tuple(sorted(int(i) for i in selected))


def build_uniform(mplusv: int, selected, v: int = 0) -> MixingMatrix:
    """Equal weights among the selected clients (and any auxiliaries)."""
    members = _members(selected)
    m = mplusv - v
    if not members:
        raise ConfigError("selection is empty")
    if any(i < 0 or i >= m for i in members):
        raise ConfigError(f"selected indices {members} out of range for m={m}")
    part = list(members) + list(range(m, mplusv))
    w = np.zeros((mplusv, mplusv))
    w[np.ix_(part, part)] = 1.0 / len(part)
    return MixingMatrix(w, members, m)


def build_dataset_proportional(sizes: Sequence[float], selected) -> MixingMatrix:
    """FedAvg-style weights: column j holds D_i / D_sel in row i."""
    sizes = np.asarray(sizes, dtype=float)
    members = _members(selected)
    m = len(sizes)
    if not members:
        raise ConfigError("selection is empty")
    sel_sizes = sizes[list(members)]
    if np.any(sel_sizes < 0) or sel_sizes.sum() <= 0:
        raise ConfigError("dataset sizes of selected clients must be positive")
    w = np.zeros((m, m))
    weights = sel_sizes / sel_sizes.sum()
    for j in members:
        w[list(members), j] = weights
    return MixingMatrix(w, members, m)


def build_easgd(m: int, alpha: float) -> MixingMatrix:
    """Mixing matrix of the elastic-averaging step with one anchor column."""
    n = m + 1
    w = np.zeros((n, n))
    for i in range(m):
        w[i, i] = 1.0 - alpha
        w[m, i] = alpha
        w[i, m] = alpha
    w[m, m] = 1.0 - m * alpha
    return MixingMatrix(w, tuple(range(m)), m)


def _raw(w) -> tuple[np.ndarray, tuple[int, ...] | None, int | None]:
    if isinstance(w, MixingMatrix):
        return w.w, w.selected, w.m
    return np.asarray(w, dtype=float), None, None


def validate(w, tol: float = 1e-9) -> Verdict:
    """Check column stochasticity, nonnegativity and zero-column bookkeeping."""
    arr, selected, m = _raw(w)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        return Verdict(False, "shape", f"expected a square matrix, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        return Verdict(False, "finite")
    if np.any(arr < -tol):
        i, j = np.argwhere(arr < -tol)[0]
        return Verdict(False, "nonnegative", f"entry ({i}, {j}) = {arr[i, j]}")
    sums = arr.sum(axis=0)
    zero_cols = np.all(np.abs(arr) <= tol, axis=0)
    for j, s in enumerate(sums):
        if not zero_cols[j] and abs(s - 1.0) > tol:
            return Verdict(False, "column-sum", f"column {j} sums to {s}")
    if selected is not None:
        n = arr.shape[0]
        expected = set(selected) | set(range(m, n))
        actual = {j for j in range(n) if not zero_cols[j]}
        if expected != actual:
            return Verdict(False, "selection-mismatch",
                           f"nonzero columns {sorted(actual)} != participants {sorted(expected)}")
    return Verdict(True)


def _min_pair_product(arr: np.ndarray, count_structural_zeros: bool) -> float:
    best = np.inf
    for j in range(arr.shape[1]):
        col = arr[:, j]
        if not np.any(col):
            continue
        vals = np.sort(col, kind="stable")
        if not count_structural_zeros:
            vals = vals[vals > 0]
            if len(vals) < 2:
                vals = np.array([0.0, 0.0])
        best = min(best, float(vals[0] * vals[1]))
    if not np.isfinite(best):
        raise DimensionError("matrix has no nonzero column")
    return best


def delta_of(w, c: float, count_structural_zeros: bool = True) -> float:
    """Upper bound on ||W^T (I - J)||_F^2 from the smallest pair in any column.

    ``max(0, c (n-1) (1 - n^2 t1 t2))`` where ``t1 t2`` is the smallest product
    of the two smallest entries of a nonzero column. With
    ``count_structural_zeros=False`` exact zeros inside a column are skipped;
    that variant is no longer a guaranteed bound.
    """
    arr, _, _ = _raw(w)
    arr = as_dense(arr)
    n = arr.shape[0]
    if n < 2:
        raise DimensionError("delta needs at least two rows per column")
    tt = _min_pair_product(arr, count_structural_zeros)
    return max(0.0, c * (n - 1) * (1.0 - n * n * tt))


def consensus_deviation_sq(phi) -> float:
    """||Phi^T (I - J)||_F^2 by direct evaluation."""
    arr, _, _ = _raw(phi)
    arr = as_dense(arr)
    n = arr.shape[0]
    if arr.shape != (n, n):
        raise DimensionError(f"expected a square matrix, got {arr.shape}")
    d = arr.T @ (np.eye(n) - j_matrix(n))
    return float(np.sum(d * d))


def is_consensus(w) -> bool:
    """True when every nonzero row of W is identical (all receivers get the same aggregate)."""
    arr, _, _ = _raw(w)
    rows = [r for r in arr if np.any(r)]
    return bool(rows) and all(np.array_equal(rows[0], r) for r in rows[1:])


def restrict_to(w: np.ndarray, members: Sequence[int], m: int) -> MixingMatrix:
    """Zero the columns of unselected clients in a full matrix."""
    arr = np.array(w, dtype=float)
    drop = [j for j in range(m) if j not in set(members)]
    arr[:, drop] = 0.0
    return MixingMatrix(arr, tuple(members), m)


def random_family_matrix(n: int, m: int, members: Sequence[int], seed: int, round: int,
                         concentration: float = 1.0, blend: float = 1.0) -> MixingMatrix:
    """Per-column Dirichlet(concentration) draw, blended with J, unselected columns zeroed.

    ``blend`` is the weight on the Dirichlet part: 1 gives the pure family, values
    near 0 give near-uniform (small delta) matrices.
    """
    rng = np.random.default_rng([seed, _FAMILY_TAG, round])
    d = rng.dirichlet(np.full(n, concentration), size=n).T
    w = (1.0 - blend) * j_matrix(n) + blend * d
    return restrict_to(w, members, m)


@dataclass
class MixingSchedule:
    """Source of W_k for aggregation iterations; identity elsewhere.

    Iterations are 1-based. Aggregation happens when ``k % tau == 0``; the
    aggregation round index is ``(k - 1) // tau``.
    """

    kind: str = "uniform-J"
    tau: int = 1
    m: int = 1
    v: int = 0
    seed: int = 0
    matrices: list = field(default_factory=list)
    concentration: float = 1.0
    blend: float = 1.0

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ConfigError(f"unknown schedule kind {self.kind!r}", "mixing.kind")
        if self.tau < 1:
            raise ConfigError("tau must be >= 1", "run.tau")
        n = self.m + self.v
        self.matrices = [as_dense(w) for w in self.matrices]
        if self.kind in ("static", "periodic-list"):
            if not self.matrices:
                raise ConfigError(f"{self.kind} schedule needs at least one matrix", "mixing.matrix")
            for w in self.matrices:
                if w.shape != (n, n):
                    raise ConfigError(f"matrix shape {w.shape} != ({n}, {n})", "mixing.matrix")
                verdict = validate(w)
                if not verdict:
                    raise ConfigError(f"invalid mixing matrix ({verdict.violation}: {verdict.detail})",
                                      "mixing.matrix")
        if self.kind == "seeded-random-family":
            if self.concentration <= 0:
                raise ConfigError("concentration must be > 0", "mixing.concentration")
            if not 0 <= self.blend <= 1:
                raise ConfigError("blend must be in [0, 1]", "mixing.blend")

    @property
    def n(self) -> int:
        return self.m + self.v

    def is_aggregation(self, k: int) -> bool:
        return k % self.tau == 0

    def mixing_at(self, k: int, sel: SelectionSet) -> MixingMatrix:
        """W_k for the round containing iteration k, respecting the selection."""
        r = (k - 1) // self.tau
        members = sel.members
        if self.kind == "uniform-J":
            return build_uniform(self.n, members, self.v)
        if self.kind == "static":
            return restrict_to(self.matrices[0], members, self.m)
        if self.kind == "periodic-list":
            return restrict_to(self.matrices[r % len(self.matrices)], members, self.m)
        return random_family_matrix(self.n, self.m, members, self.seed, r,
                                    self.concentration, self.blend)

    def s_matrix(self, k: int, sel: SelectionSet) -> np.ndarray:
        """S_k: W_k on aggregation iterations, identity otherwise."""
        if self.is_aggregation(k):
            return self.mixing_at(k, sel).w
        return np.eye(self.n)


def to_json(w) -> str:
    arr, _, _ = _raw(w)
    return json.dumps({"dim": int(arr.shape[0]), "columns": arr.T.tolist()})


def from_json(doc: str | dict, m: int | None = None, tol: float = 1e-9) -> MixingMatrix:
    """Load the column-major JSON form, validating on the way in."""
    data = json.loads(doc) if isinstance(doc, str) else doc
    try:
        dim = int(data["dim"])
        cols = data["columns"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed mixing matrix document: {exc}") from exc
    if len(cols) != dim or any(len(col) != dim for col in cols):
        raise ConfigError(f"expected {dim} columns of length {dim}")
    arr = np.array(cols, dtype=float).T
    verdict = validate(arr, tol)
    if not verdict:
        raise ConfigError(f"invalid mixing matrix ({verdict.violation}: {verdict.detail})")
    m = dim if m is None else m
    selected = tuple(j for j in range(m) if np.any(arr[:, j]))
    return MixingMatrix(arr, selected, m)
