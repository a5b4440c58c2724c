"""Per-round client selection."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

POLICY_KINDS = ("all", "static-random", "per-round-random")

# Tags mixed into RNG keys so streams never collide with other consumers.
_STATIC_TAG = 0x5E1EC7
_ROUND_TAG = 0x20D


def selected_count(c: float, m: int) -> int:
    """round(c*m), half rounding up."""
    if m < 1:
        raise ConfigError(f"client count must be >= 1, got {m}")
    if not 0 < c <= 1:
        raise ConfigError(f"selection fraction must be in (0, 1], got {c}", "selection.c")
    n = int(math.floor(c * m + 0.5 + 1e-9))
    if n < 1:
        raise ConfigError(f"c*m = {c * m:g} rounds to zero clients", "selection.c")
    return min(n, m)


@dataclass(frozen=True)
class SelectionSet:
    round: int
    members: tuple[int, ...]

    def __contains__(self, i) -> bool:
        return i in self.members

    def __len__(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class SelectionPolicy:
    kind: str = "all"
    c: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ConfigError(f"unknown policy {self.kind!r}; expected one of {POLICY_KINDS}",
                              "selection.kind")
        if not 0 < self.c <= 1:
            raise ConfigError(f"selection fraction must be in (0, 1], got {self.c}", "selection.c")


def _fisher_yates_sample(rng: np.random.Generator, m: int, k: int) -> list[int]:
    # partial Fisher-Yates: the first k slots end up a uniform k-subset
    pool = list(range(m))
    for i in range(k):
        j = int(rng.integers(i, m))
        pool[i], pool[j] = pool[j], pool[i]
    return sorted(pool[:k])


def select(policy: SelectionPolicy, round: int, m: int) -> SelectionSet:
    """Selected clients for ``round``; a pure function of (policy, round, m)."""
    if m < 1:
        raise ConfigError(f"client count must be >= 1, got {m}")
    if policy.kind == "all":
        return SelectionSet(round, tuple(range(m)))
    k = selected_count(policy.c, m)
    if policy.kind == "static-random":
        key = [policy.seed, _STATIC_TAG]
    else:
        key = [policy.seed, _ROUND_TAG, round]
    rng = np.random.default_rng(key)
    return SelectionSet(round, tuple(_fisher_yates_sample(rng, m, k)))


def zero_unselected(x, g, sel: SelectionSet):
    """Copies of ``x`` and ``g`` with unselected client columns set to zero.

    Accepts ``StateMatrix`` objects or raw arrays (in which case every column
    is treated as a client). Auxiliary columns are left alone.
    """
    from .trainer import StateMatrix

    if isinstance(x, StateMatrix):
        m = x.m
        xd, gd = x.data.copy(), np.array(g.data if isinstance(g, StateMatrix) else g, dtype=float)
    else:
        xd, gd = np.array(x, dtype=float), np.array(g, dtype=float)
        m = xd.shape[1]
    if xd.shape != gd.shape:
        raise ValueError(f"shape mismatch {xd.shape} vs {gd.shape}")
    drop = [j for j in range(m) if j not in sel.members]
    xd[:, drop] = 0.0
    gd[:, drop] = 0.0
    if isinstance(x, StateMatrix):
        return StateMatrix(xd, m), StateMatrix(gd, m)
    return xd, gd
