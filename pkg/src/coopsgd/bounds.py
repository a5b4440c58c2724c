"""Convergence-error bounds for the unified local-SGD family.

All functions are pure. Values are always computed, even when a validity
condition fails; the report carries the condition flags alongside.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .errors import DomainError

LR_SLACK = 1e-12

# Communication periods quoted alongside two worked varsigma values; the
# threshold formula gives different numbers, so both are reported.
QUOTED_THRESHOLD_EXAMPLES = ((1 / 5, 2), (1 / 7, 3))


def eta_eff(eta: float, c: float, m: int, v: int) -> float:
    if m < 1:
        raise DomainError("m must be >= 1")
    return c * m / (m + v) * eta


def truncated_horizon(K: int, tau: int) -> int:
    """Largest multiple of tau not exceeding K."""
    if tau < 1:
        raise DomainError("tau must be >= 1")
    if K < tau:
        raise DomainError(f"K={K} is shorter than one communication period tau={tau}")
    return (K // tau) * tau


def s_series(K: int, tau: int) -> float:
    """(K/tau - 1) (2 + K/(2 tau)), over whole communication periods."""
    k = truncated_horizon(K, tau)
    rounds = k / tau
    return (rounds - 1.0) * (2.0 + k / (2.0 * tau))


def p_value(eta: float, delta: float, tau: int, K: int) -> float:
    """eta^2 delta tau [2 tau S + (tau - 1)(1 + K/tau)]."""
    if min(eta, delta) < 0:
        raise DomainError("eta and delta must be nonnegative")
    k = truncated_horizon(K, tau)
    return eta ** 2 * delta * tau * (2.0 * tau * s_series(k, tau) + (tau - 1.0) * (1.0 + k / tau))


@dataclass(frozen=True)
class BoundInputs:
    L: float
    sigma: float
    kappa: float
    F_u1: float
    F_inf: float
    eta: float
    K: int
    tau: int
    c: float
    m: int
    v: int
    delta: float
    X1_frob_sq: float = 0.0
    x1_term_over_k: bool = False

    def __post_init__(self):
        for name in ("L", "sigma", "kappa", "eta", "delta", "X1_frob_sq"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be nonnegative")
        if not 1 <= self.tau <= self.K:
            raise DomainError(f"need K >= tau >= 1, got K={self.K}, tau={self.tau}")
        if not 0 < self.c <= 1:
            raise DomainError(f"c must be in (0, 1], got {self.c}")
        if self.m < 1 or self.v < 0:
            raise DomainError("need m >= 1 and v >= 0")


def _terms(inp: BoundInputs) -> tuple[float, float, float, float]:
    ee = eta_eff(inp.eta, inp.c, inp.m, inp.v)
    cm = inp.c * inp.m
    opt = 2.0 * (inp.F_u1 - inp.F_inf) / (ee * inp.K) if ee > 0 else math.inf
    noise = ee * inp.L * inp.sigma ** 2 / cm
    init = inp.delta * inp.L ** 2 * inp.X1_frob_sq / cm
    if inp.x1_term_over_k:
        init /= inp.K
    drift = inp.eta ** 2 * inp.sigma ** 2 * inp.L ** 2 * inp.delta * (inp.K - 1)
    return opt, noise, init, drift


def epsilon_iid(inp: BoundInputs) -> float:
    return 4.0 * sum(_terms(inp))


def epsilon_niid(inp: BoundInputs) -> float:
    p = p_value(inp.eta, inp.delta, inp.tau, inp.K)
    return epsilon_iid(inp) + 12.0 * p * inp.L ** 2 * inp.kappa ** 2


def p_limit(L: float, c: float) -> float:
    """min(1/6, 1/(6L^2 + 3), c/(6L^2))."""
    cap = c / (6.0 * L * L) if L > 0 else math.inf
    return min(1.0 / 6.0, 1.0 / (6.0 * L * L + 3.0), cap)


def k_condition(K: int, tau: int, delta: float) -> bool:
    """K >= 2(2 tau - 1) when delta >= 1, else K >= delta (2 tau - 1/2)."""
    if delta >= 1:
        return K >= 2 * (2 * tau - 1)
    return K >= delta * (2 * tau - 0.5)


@dataclass(frozen=True)
class BoundReport:
    eta_eff: float
    s_series: float
    p_value: float
    epsilon_iid: float
    epsilon_niid: float
    lr_ok: bool
    p_ok: bool
    c_ok: bool
    k_ok: bool
    truncated: bool
    horizon: int

    @property
    def all_ok(self) -> bool:
        return self.lr_ok and self.p_ok and self.c_ok and self.k_ok


def check_conditions(inp: BoundInputs) -> dict[str, bool]:
    ee = eta_eff(inp.eta, inp.c, inp.m, inp.v)
    p = p_value(inp.eta, inp.delta, inp.tau, inp.K)
    return {
        "lr_ok": ee * inp.L <= 1.0 + LR_SLACK,
        "p_ok": 0.0 <= p <= p_limit(inp.L, inp.c),
        "c_ok": inp.c >= 6.0 * p * inp.L ** 2,
        "k_ok": k_condition(inp.K, inp.tau, inp.delta),
    }


def report(inp: BoundInputs) -> BoundReport:
    flags = check_conditions(inp)
    horizon = truncated_horizon(inp.K, inp.tau)
    return BoundReport(
        eta_eff=eta_eff(inp.eta, inp.c, inp.m, inp.v),
        s_series=s_series(inp.K, inp.tau),
        p_value=p_value(inp.eta, inp.delta, inp.tau, inp.K),
        epsilon_iid=epsilon_iid(inp),
        epsilon_niid=epsilon_niid(inp),
        truncated=horizon != inp.K,
        horizon=horizon,
        **flags,
    )


def report_dict(inp: BoundInputs) -> dict:
    out = asdict(report(inp))
    out["inputs"] = asdict(inp)
    return out


@dataclass(frozen=True)
class TunedRate:
    eta: float
    k_ok: bool
    sampling_term: float
    mixing_term: float


def corollary1_lr(L: float, c: float, m: int, v: int, K: int, delta: float = 0.0) -> TunedRate:
    """eta = (m+v)/(L c m) * sqrt(c m / K^2), with the O(1/sqrt(cm)) + O(m delta/(cK)) terms.

    ``k_ok`` flags K >= sqrt(c m), which makes eta_eff L <= 1.
    """
    if L <= 0 or K < 1:
        raise DomainError("need L > 0 and K >= 1")
    eta = (m + v) / (L * c * m) * math.sqrt(c * m / K ** 2)
    return TunedRate(eta, K >= math.sqrt(c * m), 1.0 / math.sqrt(c * m), m * delta / (c * K))


def sigma_comparison_term(varsigma: float, tau: int) -> tuple[float, float]:
    """((1+s^2)/(1-s^2)) tau - 1 and the tightness threshold (1-s^2)/(2 s^2)."""
    if not 0 <= varsigma < 1:
        raise DomainError(f"varsigma must be in [0, 1), got {varsigma}")
    s2 = varsigma ** 2
    value = (1 + s2) / (1 - s2) * tau - 1
    threshold = math.inf if s2 == 0 else (1 - s2) / (2 * s2)
    return value, threshold


def varsigma_table(tau: int) -> list[dict]:
    """Formula threshold next to the quoted communication period for the worked examples."""
    rows = []
    for s, quoted in QUOTED_THRESHOLD_EXAMPLES:
        value, threshold = sigma_comparison_term(s, tau)
        rows.append({"varsigma": s, "formula_threshold": threshold, "quoted_tau": quoted,
                     "comparison_term": value, "tau_exceeds_threshold": tau > threshold})
    return rows
