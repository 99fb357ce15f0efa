"""Benchmark objectives: quadratic, logistic regression, Rosenbrock, and a
regularized stochastic logistic problem, each with an analytic gradient
oracle and cached constants (L, strong convexity, optimum where available).
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import expit

from .core import Objective, SeededRng, as_vec
from .errors import NumericalError

__all__ = [
    "QuadraticObjective",
    "LogisticObjective",
    "RosenbrockObjective",
    "StochasticLogisticObjective",
    "make_quadratic",
    "make_logistic",
    "make_rosenbrock",
    "make_stochastic_logistic",
    "default_start",
    "dump_dataset",
    "load_dataset",
]

_SYMMETRY_RTOL = 1e-10


class QuadraticObjective(Objective):
    """f(x) = 0.5 x'Ax + b'x with symmetric positive-definite A.

    Caches L = lambda_max(A), the strong-convexity constant lambda_min(A),
    and the exact optimum x* = -A^{-1} b.
    """

    def __init__(self, A, b):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got shape {A.shape}")
        scale = np.abs(A).max()
        if scale == 0 or np.abs(A - A.T).max() > _SYMMETRY_RTOL * scale:
            raise ValueError("A must be symmetric to relative tolerance 1e-10")
        A = 0.5 * (A + A.T)
        dim = A.shape[0]
        b = as_vec(b, dim, name="b")
        try:
            evals = np.linalg.eigvalsh(A)
            x_star = np.linalg.solve(A, -b)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"quadratic setup failed for d={dim}: {exc}") from exc
        lam_min, lam_max = float(evals[0]), float(evals[-1])
        if lam_min <= 0:
            raise ValueError(f"A must be positive definite, lambda_min={lam_min}")
        self.A = A
        self.b = b
        f_star = 0.5 * x_star @ A @ x_star + b @ x_star
        super().__init__(dim, L=lam_max, mu_sc=lam_min, optimum=(x_star, f_star))

    @classmethod
    def from_factor(cls, M, eps: float, b) -> "QuadraticObjective":
        """Build A = M'M + eps*I from a square factor M."""
        M = np.asarray(M, dtype=float)
        if eps <= 0:
            raise ValueError(f"eps must be positive, got {eps}")
        A = M.T @ M + eps * np.eye(M.shape[1])
        return cls(A, b)

    def value(self, x):
        x = as_vec(x, self.dim)
        return float(0.5 * x @ self.A @ x + self.b @ x)

    def gradient(self, x):
        x = as_vec(x, self.dim)
        return self.A @ x + self.b


class LogisticObjective(Objective):
    """Mean logistic loss over m labeled examples.

    f(x) = (1/m) sum_i log(1 + exp(-y_i a_i'x)).  Uses the softplus form
    log(1 + exp(-z)) = logaddexp(0, -z) so large margins cannot overflow.
    Synthetic labels are separable by construction, so the infimum is not
    attained and ``optimum`` stays None.
    """

    def __init__(self, features, labels):
        features = np.asarray(features, dtype=float)
        labels = np.asarray(labels, dtype=float)
        if features.ndim != 2:
            raise ValueError(f"features must be m x d, got shape {features.shape}")
        m, dim = features.shape
        if m < 1:
            raise ValueError("need at least one example")
        if labels.shape != (m,) or not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ValueError("labels must be a length-m array of +/-1")
        self.features = features
        self.labels = labels
        self.m = m
        gram_max = float(np.linalg.eigvalsh(features.T @ features)[-1])
        super().__init__(dim, L=gram_max / (4.0 * m))

    def value(self, x):
        x = as_vec(x, self.dim)
        z = self.labels * (self.features @ x)
        return float(np.mean(np.logaddexp(0.0, -z)))

    def gradient(self, x):
        x = as_vec(x, self.dim)
        z = self.labels * (self.features @ x)
        w = self.labels * expit(-z)
        return -(self.features.T @ w) / self.m


class RosenbrockObjective(Objective):
    """The chained Rosenbrock function, sum of 100(x_{i+1}-x_i^2)^2 + (1-x_i)^2.

    Globally minimized at the all-ones vector with value 0.  It has no
    global smoothness constant; ``L`` is an empirical surrogate, twice the
    largest Hessian spectral norm over points sampled in the box
    [-2.048, 2.048]^d (a fixed internal seed keeps it deterministic).
    """

    BOX = 2.048
    _L_PROBE_POINTS = 200
    _L_SEED = 170064

    def __init__(self, dim: int):
        if dim < 2:
            raise ValueError(f"Rosenbrock needs dim >= 2, got {dim}")
        L = 2.0 * self._max_hessian_norm_in_box(dim)
        super().__init__(dim, L=L, optimum=(np.ones(dim), 0.0))

    @classmethod
    def _max_hessian_norm_in_box(cls, dim: int) -> float:
        rng = SeededRng(cls._L_SEED, dim)
        worst = 0.0
        for _ in range(cls._L_PROBE_POINTS):
            x = rng.uniform(-cls.BOX, cls.BOX, dim)
            worst = max(worst, cls._hessian_norm(x))
        return worst

    @staticmethod
    def _hessian_norm(x: np.ndarray) -> float:
        # The Hessian is symmetric tridiagonal.
        d = x.shape[0]
        diag = np.zeros(d)
        diag[:-1] += 1200.0 * x[:-1] ** 2 - 400.0 * x[1:] + 2.0
        diag[1:] += 200.0
        off = -400.0 * x[:-1]
        lo = eigh_tridiagonal(diag, off, select="i", select_range=(0, 0),
                              eigvals_only=True)[0]
        hi = eigh_tridiagonal(diag, off, select="i", select_range=(d - 1, d - 1),
                              eigvals_only=True)[0]
        return max(abs(lo), abs(hi))

    def value(self, x):
        x = as_vec(x, self.dim)
        return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))

    def gradient(self, x):
        x = as_vec(x, self.dim)
        g = np.zeros_like(x)
        g[:-1] = -400.0 * x[:-1] * (x[1:] - x[:-1] ** 2) - 2.0 * (1.0 - x[:-1])
        g[1:] += 200.0 * (x[1:] - x[:-1] ** 2)
        return g

    def standard_start(self) -> np.ndarray:
        """The classic start (-1.2, 1, -1.2, 1, ...) extended cyclically."""
        reps = (self.dim + 1) // 2
        return np.tile([-1.2, 1.0], reps)[: self.dim]


class StochasticLogisticObjective(Objective):
    """Regularized logistic loss over a fixed synthetic pool.

    The full objective is the pool mean plus a ridge term,
    f(x) = (1/n) sum_i log(1 + exp(-y_i w_i'x)) + (rho/2) ||x||^2,
    which equals the expectation of the mini-batch realizations: each
    ``sample_key`` selects ``batch_size`` pool indices with replacement via
    a counter-based generator, so realizations are pure in (x, key).

    ``L`` is a uniform smoothness constant valid for every realization,
    max_i ||w_i||^2 / 4 + rho; the ridge makes everything rho-strongly
    convex.  ``report_value`` estimates the objective on a held-out
    evaluation batch that never enters training draws.
    """

    def __init__(self, pool_features, pool_labels, batch_size: int, rho: float,
                 eval_features=None, eval_labels=None, batch_seed: int = 0):
        pool_features = np.asarray(pool_features, dtype=float)
        pool_labels = np.asarray(pool_labels, dtype=float)
        if pool_features.ndim != 2:
            raise ValueError("pool_features must be n x d")
        n, dim = pool_features.shape
        if not np.all(np.isin(pool_labels, (-1.0, 1.0))) or pool_labels.shape != (n,):
            raise ValueError("pool_labels must be a length-n array of +/-1")
        if not 1 <= batch_size <= n:
            raise ValueError(f"need 1 <= batch_size <= pool size, got {batch_size}")
        if rho <= 0:
            raise ValueError(f"rho must be positive, got {rho}")
        self.pool_features = pool_features
        self.pool_labels = pool_labels
        self.n_pool = n
        self.batch_size = int(batch_size)
        self.rho = float(rho)
        self.batch_seed = int(batch_seed)
        if eval_features is None:
            eval_features = pool_features
            eval_labels = pool_labels
        self.eval_features = np.asarray(eval_features, dtype=float)
        self.eval_labels = np.asarray(eval_labels, dtype=float)
        L = float(np.max(np.sum(pool_features**2, axis=1))) / 4.0 + rho
        super().__init__(dim, L=L, mu_sc=rho)

    def _loss(self, features, labels, x):
        z = labels * (features @ x)
        return float(np.mean(np.logaddexp(0.0, -z)) + 0.5 * self.rho * (x @ x))

    def _loss_grad(self, features, labels, x):
        z = labels * (features @ x)
        w = labels * expit(-z)
        return -(features.T @ w) / features.shape[0] + self.rho * x

    def value(self, x):
        x = as_vec(x, self.dim)
        return self._loss(self.pool_features, self.pool_labels, x)

    def gradient(self, x):
        x = as_vec(x, self.dim)
        return self._loss_grad(self.pool_features, self.pool_labels, x)

    def batch_indices(self, sample_key: int) -> np.ndarray:
        """Pool indices of the mini-batch identified by ``sample_key``."""
        key = np.array([self.batch_seed, int(sample_key)], dtype=np.uint64)
        gen = np.random.Generator(np.random.Philox(key=key))
        return gen.integers(0, self.n_pool, self.batch_size)

    def stochastic_value(self, x, sample_key: int) -> float:
        x = as_vec(x, self.dim)
        idx = self.batch_indices(sample_key)
        return self._loss(self.pool_features[idx], self.pool_labels[idx], x)

    def stochastic_gradient(self, x, sample_key: int) -> np.ndarray:
        x = as_vec(x, self.dim)
        idx = self.batch_indices(sample_key)
        return self._loss_grad(self.pool_features[idx], self.pool_labels[idx], x)

    def report_value(self, x) -> float:
        """Objective estimate on the held-out evaluation batch."""
        x = as_vec(x, self.dim)
        return self._loss(self.eval_features, self.eval_labels, x)


def _labels_from_margin(margin: np.ndarray) -> np.ndarray:
    # sign with ties resolved to +1
    return np.where(margin >= 0, 1.0, -1.0)


def make_quadratic(dim: int, eps: float, rng: SeededRng) -> QuadraticObjective:
    """Random quadratic with A = M'M + eps*I, entries of M and b standard normal."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    M = rng.standard_normal((dim, dim))
    b = rng.standard_normal(dim)
    return QuadraticObjective.from_factor(M, eps, b)


def make_logistic(dim: int, m: int, rng: SeededRng) -> LogisticObjective:
    """Synthetic logistic regression: Gaussian features, labels from the sign
    of a hidden weight vector's margin (ties resolved to +1)."""
    features = rng.standard_normal((m, dim))
    w_true = rng.standard_normal(dim)
    labels = _labels_from_margin(features @ w_true)
    return LogisticObjective(features, labels)


def make_rosenbrock(dim: int) -> RosenbrockObjective:
    return RosenbrockObjective(dim)


def make_stochastic_logistic(dim: int, rng: SeededRng, batch_size: int = 10,
                             rho: float = 0.1, pool_factor: int = 10,
                             eval_factor: int = 50) -> StochasticLogisticObjective:
    """Synthetic stochastic logistic problem.

    Draws a training pool of ``pool_factor * dim`` examples plus a held-out
    evaluation batch of ``eval_factor * batch_size`` examples from the same
    distribution; mini-batch keys are seeded from the generating stream.
    """
    n = pool_factor * dim
    w_true = rng.standard_normal(dim)
    pool = rng.standard_normal((n, dim))
    pool_labels = _labels_from_margin(pool @ w_true)
    n_eval = eval_factor * batch_size
    ev = rng.standard_normal((n_eval, dim))
    ev_labels = _labels_from_margin(ev @ w_true)
    return StochasticLogisticObjective(pool, pool_labels, batch_size, rho,
                                       eval_features=ev, eval_labels=ev_labels,
                                       batch_seed=rng.seed)


def default_start(obj: Objective, rng: SeededRng) -> np.ndarray:
    """Standard initialization: the cyclic Rosenbrock start, else N(0, I)."""
    if isinstance(obj, RosenbrockObjective):
        return obj.standard_start()
    return rng.standard_normal(obj.dim)


def dump_dataset(path, features, labels) -> None:
    """Write a labeled dataset as CSV, one row per example: label, then features."""
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=float)
    rows = np.column_stack([labels, features])
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def load_dataset(path):
    """Read a dataset written by :func:`dump_dataset`; returns (features, labels)."""
    rows = np.loadtxt(path, delimiter=",", ndmin=2)
    return rows[:, 1:], rows[:, 0]
