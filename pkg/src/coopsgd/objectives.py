"""Synthetic objectives with known constants and keyed stochastic-gradient oracles."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import ConfigError, InfeasibleError

_NOISE_TAG = 0x0A1
_BATCH_TAG = 0x0B2


@dataclass
class QuadraticSuite:
    """F_i(x) = 1/2 x^T A x - b_i^T x with a Hessian A shared by every client.

    ``b`` has one row per client.
    """

    A: np.ndarray
    b: np.ndarray
    sigma: float = 0.0

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.atleast_2d(np.asarray(self.b, dtype=float))
        if self.A.shape[0] != self.A.shape[1]:
            raise ConfigError("Hessian must be square")
        if self.b.shape[1] != self.A.shape[0]:
            raise ConfigError(f"linear terms have dim {self.b.shape[1]}, Hessian {self.A.shape[0]}")
        if not np.allclose(self.A, self.A.T, atol=1e-12, rtol=0):
            raise ConfigError("Hessian must be symmetric")

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.b.shape[0]

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.A)

    @property
    def smoothness(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def b_mean(self) -> np.ndarray:
        return self.b.mean(axis=0)

    @property
    def kappa_sq(self) -> float:
        if np.all(self.b == self.b[0]):
            return 0.0
        r = self.b - self.b_mean
        return float(np.mean(np.sum(r * r, axis=1)))

    @property
    def kappa(self) -> float:
        return float(np.sqrt(self.kappa_sq))

    @property
    def minimizer(self) -> np.ndarray:
        if self.eigenvalues[0] <= 0:
            raise InfeasibleError("Hessian is not positive definite; no unique minimizer")
        return np.linalg.solve(self.A, self.b_mean)

    @property
    def f_inf(self) -> float:
        x = self.minimizer
        return self.global_loss(x)

    def client_loss(self, i: int, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.A @ x - self.b[i] @ x)

    def client_grad(self, i: int, x) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float) - self.b[i]

    def global_loss(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.A @ x - self.b_mean @ x)

    def global_grad(self, x) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float) - self.b_mean


def make_quadratic(d: int, m: int, spectrum: Sequence[float], kappa_target: float, seed: int,
                   sigma: float = 0.0, mean_scale: float = 1.0) -> QuadraticSuite:
    """Random rotation of a given spectrum with heterogeneity exactly ``kappa_target``."""
    spectrum = np.asarray(spectrum, dtype=float)
    if spectrum.shape != (d,):
        raise ConfigError(f"spectrum must have length d={d}", "objective.spectrum")
    if np.any(spectrum < 0):
        raise ConfigError("spectrum entries must be >= 0", "objective.spectrum")
    if kappa_target < 0:
        raise ConfigError("kappa must be >= 0", "objective.kappa")
    if kappa_target > 0 and m == 1:
        raise InfeasibleError("a single client cannot have positive dissimilarity")
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q = q * np.sign(np.diag(r))
    a = q.T @ np.diag(spectrum) @ q
    a = 0.5 * (a + a.T)
    b_bar = mean_scale * rng.standard_normal(d)
    b = np.tile(b_bar, (m, 1))
    if kappa_target > 0:
        dev = rng.standard_normal((m, d))
        dev -= dev.mean(axis=0)
        dev *= kappa_target / np.sqrt(np.mean(np.sum(dev * dev, axis=1)))
        b = b + dev
    return QuadraticSuite(a, b, sigma)


def linear_spectrum(d: int, lo: float, hi: float) -> np.ndarray:
    return np.linspace(lo, hi, d) if d > 1 else np.array([hi])


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class LogisticSuite:
    """Binary logistic regression split across clients.

    ``features`` and ``labels`` are per-client arrays. The global loss is the
    unweighted mean of per-client mean losses.
    """

    features: list
    labels: list
    batch_size: int = 16
    l2: float = 0.0
    f_inf: float = 0.0
    sigma: float | None = None

    def __post_init__(self):
        self.features = [np.asarray(f, dtype=float) for f in self.features]
        self.labels = [np.asarray(y, dtype=float) for y in self.labels]
        if len(self.features) != len(self.labels):
            raise ConfigError("features and labels must have one entry per client")
        for f, y in zip(self.features, self.labels):
            if len(f) == 0:
                raise ConfigError("every client needs at least one sample")
            if len(f) != len(y):
                raise ConfigError("feature/label length mismatch")
            if not np.all(np.isin(y, (0.0, 1.0))):
                raise ConfigError("labels must be 0 or 1")
            if not np.all(np.isfinite(f)):
                raise ConfigError("features must be finite")

    @property
    def m(self) -> int:
        return len(self.features)

    @property
    def d(self) -> int:
        return self.features[0].shape[1]

    @cached_property
    def smoothness(self) -> float:
        """Conservative L: max over clients of lambda_max(X^T X / n) / 4, plus l2."""
        best = 0.0
        for f in self.features:
            best = max(best, float(np.linalg.eigvalsh(f.T @ f / len(f))[-1]) / 4.0)
        return best + self.l2

    def _loss(self, f, y, x) -> float:
        z = f @ x
        # log(1 + e^z) - y z, computed stably
        return float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * self.l2 * x @ x)

    def _grad(self, f, y, x) -> np.ndarray:
        return f.T @ (_sigmoid(f @ x) - y) / len(y) + self.l2 * x

    def client_loss(self, i: int, x) -> float:
        return self._loss(self.features[i], self.labels[i], np.asarray(x, dtype=float))

    def client_grad(self, i: int, x) -> np.ndarray:
        return self._grad(self.features[i], self.labels[i], np.asarray(x, dtype=float))

    def minibatch_grad(self, i: int, x, idx) -> np.ndarray:
        return self._grad(self.features[i][idx], self.labels[i][idx], np.asarray(x, dtype=float))

    def global_loss(self, x) -> float:
        return float(np.mean([self.client_loss(i, x) for i in range(self.m)]))

    def global_grad(self, x) -> np.ndarray:
        return np.mean([self.client_grad(i, x) for i in range(self.m)], axis=0)

    def dissimilarity_sq(self, x) -> float:
        """(1/m) sum_i ||grad F_i(x) - grad F(x)||^2 at one point."""
        gs = np.array([self.client_grad(i, x) for i in range(self.m)])
        r = gs - gs.mean(axis=0)
        return float(np.mean(np.sum(r * r, axis=1)))

    def minibatch_variance(self, x) -> float:
        """Largest over clients of E||g_i - grad F_i||^2 for sampling with replacement."""
        x = np.asarray(x, dtype=float)
        worst = 0.0
        for f, y in zip(self.features, self.labels):
            per = f * (_sigmoid(f @ x) - y)[:, None]
            r = per - per.mean(axis=0)
            worst = max(worst, float(np.mean(np.sum(r * r, axis=1))) / self.batch_size)
        return worst


def synthetic_classification(n: int, d: int, seed: int, margin: float = 2.0, bias: bool = True):
    """Gaussian features labelled by a noisy random linear classifier.

    With ``bias`` the last of the ``d`` columns is a constant 1, so label-skewed
    clients disagree on the intercept.
    """
    rng = np.random.default_rng(seed)
    w_star = rng.standard_normal(d)
    w_star *= margin / np.linalg.norm(w_star)
    x = rng.standard_normal((n, d))
    if bias:
        x[:, -1] = 1.0
    p = _sigmoid(x @ w_star)
    y = (rng.random(n) < p).astype(float)
    return x, y


def partition_iid(n: int, m: int, seed: int) -> list[np.ndarray]:
    if n < m:
        raise ConfigError(f"{n} samples cannot cover {m} clients")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(p) for p in np.array_split(perm, m)]


def partition_dirichlet(labels, m: int, alpha: float, seed: int) -> list[np.ndarray]:
    """Split sample indices so each client's class mix follows Dirichlet(alpha).

    Each client draws a class-mix vector q_i ~ Dir(alpha * 1). Every class is
    then divided among clients in proportion to q_{i, class}, so all samples
    are assigned exactly once.
    """
    labels = np.asarray(labels)
    n = len(labels)
    if alpha <= 0:
        raise ConfigError("alpha must be > 0", "objective.alpha")
    if n < m:
        raise ConfigError(f"{n} samples cannot cover {m} clients")
    rng = np.random.default_rng(seed)
    classes = np.unique(labels)
    mix = rng.dirichlet(np.full(len(classes), alpha), size=m)
    parts: list[list[int]] = [[] for _ in range(m)]
    for ci, cls in enumerate(classes):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        share = mix[:, ci] / mix[:, ci].sum()
        cuts = np.floor(np.cumsum(share) * len(idx) + 0.5).astype(int)[:-1]
        for i, chunk in enumerate(np.split(idx, cuts)):
            parts[i].extend(int(j) for j in chunk)
    # keep every client non-empty by moving single samples from the largest client
    for i in range(m):
        if not parts[i]:
            donor = max(range(m), key=lambda j: len(parts[j]))
            parts[i].append(parts[donor].pop())
    return [np.array(sorted(p), dtype=int) for p in parts]


def make_logistic(n: int, d: int, m: int, seed: int, partition: str = "iid", alpha: float = 0.6,
                  batch_size: int = 16, l2: float = 0.0, f_inf: float = 0.0,
                  data=None) -> LogisticSuite:
    """Build a logistic suite from synthetic data (or ``data=(x, y)``)."""
    x, y = data if data is not None else synthetic_classification(n, d, seed)
    if partition == "iid":
        parts = partition_iid(len(y), m, seed + 1)
    elif partition == "dirichlet":
        parts = partition_dirichlet(y, m, alpha, seed + 1)
    else:
        raise ConfigError(f"unknown partition {partition!r}", "objective.partition")
    return LogisticSuite([x[p] for p in parts], [y[p] for p in parts], batch_size, l2, f_inf)


def load_csv_dataset(path):
    """Rows of ``features..., label``; a non-numeric first row is treated as a header."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                if rows:
                    raise ConfigError(f"non-numeric row in {path}: {row}") from None
    if not rows:
        raise ConfigError(f"{path} has no data rows")
    arr = np.array(rows)
    return arr[:, :-1], arr[:, -1]


@dataclass
class GradientOracle:
    """Stochastic gradients keyed by (seed, client, iteration).

    ``noise="gaussian"`` adds N(0, sigma^2/d I) to the exact client gradient so
    the variance bound holds with equality; ``noise="minibatch"`` samples
    ``suite.batch_size`` points with replacement from the client's data.
    """

    suite: object
    sigma: float = 0.0
    seed: int = 0
    noise: str = "gaussian"

    def __post_init__(self):
        if self.noise not in ("gaussian", "minibatch"):
            raise ConfigError(f"unknown noise model {self.noise!r}")

    def grad(self, client: int, x, iteration: int) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.noise == "minibatch":
            n = len(self.suite.labels[client])
            rng = np.random.default_rng([self.seed, _BATCH_TAG, client, iteration])
            idx = rng.integers(0, n, size=self.suite.batch_size)
            return self.suite.minibatch_grad(client, x, idx)
        g = self.suite.client_grad(client, x)
        if self.sigma > 0:
            rng = np.random.default_rng([self.seed, _NOISE_TAG, client, iteration])
            g = g + rng.standard_normal(g.shape) * (self.sigma / np.sqrt(g.size))
        return g


def grad(oracle: GradientOracle, client: int, x, iteration: int) -> np.ndarray:
    return oracle.grad(client, x, iteration)


def true_global_grad(suite, x) -> np.ndarray:
    return suite.global_grad(x)


def global_loss(suite, x) -> float:
    return suite.global_loss(x)
