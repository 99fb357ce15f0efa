"""Domain types shared by every module: seeded Gaussian randomness,
direction blocks, gradient estimates, and the black-box objective contract.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import EvaluationError

_MASK64 = (1 << 64) - 1

#: Condition-number estimate above which a direction block counts as degenerate.
MAX_BLOCK_CONDITION = 1e8


def as_vec(x, dim: int | None = None, name: str = "x") -> np.ndarray:
    """Coerce ``x`` to a finite 1-D float64 vector, optionally of length ``dim``."""
    v = np.ascontiguousarray(x, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"{name} has length {v.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


class SeededRng:
    """Deterministic Gaussian stream identified by ``(seed, stream_id)``.

    Standard normals are produced by numpy's ziggurat sampler driven by the
    counter-based Philox-4x64 bit generator keyed with the two 64-bit words
    ``(seed, stream_id)``.  The same pair therefore reproduces bitwise
    identical draws on every platform running the same numpy generation.

    Instances are stateful and single-owner.  Parallel workers must not share
    one instance; give each its own stream via :meth:`derive`.  Callers that
    derive sub-streams internally use small offsets (< 8), so spacing top
    level stream ids by at least 8 keeps all streams disjoint.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        key = np.array([self.seed & _MASK64, self.stream_id & _MASK64], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def derive(self, offset: int) -> "SeededRng":
        """Fresh, unadvanced stream ``(seed, stream_id + offset)``."""
        return SeededRng(self.seed, self.stream_id + int(offset))

    def standard_normal(self, shape) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def uniform(self, low: float, high: float, size) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def next_key(self) -> int:
        """One 63-bit integer, e.g. to identify a mini-batch draw."""
        return int(self._gen.integers(0, 1 << 63))

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, stream_id={self.stream_id})"


def gaussian_standard(rng: SeededRng, n: int) -> np.ndarray:
    """Draw ``n`` i.i.d. standard-normal variates, advancing ``rng``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return rng.standard_normal(int(n))


@dataclass(frozen=True)
class DirectionBlock:
    """Matrix of ``q`` i.i.d. standard-Gaussian direction columns in dimension d.

    Columns are linearly independent with probability one; the numerical
    rank check happens where the block is factorized (the alignment solve).
    """

    U: np.ndarray
    q: int
    seed: int

    def __post_init__(self):
        U = np.asarray(self.U, dtype=float)
        if U.ndim != 2:
            raise ValueError(f"U must be a d x q matrix, got shape {U.shape}")
        d, q = U.shape
        if q != self.q:
            raise ValueError(f"q={self.q} does not match U with {q} columns")
        if not 1 <= q <= d:
            raise ValueError(f"need 1 <= q <= d, got q={q}, d={d}")
        if not np.all(np.isfinite(U)):
            raise ValueError("direction block contains non-finite entries")
        object.__setattr__(self, "U", U)

    @property
    def dim(self) -> int:
        return self.U.shape[0]


def sample_direction_block(dim: int, q: int, rng: SeededRng) -> DirectionBlock:
    """Sample a fresh d x q block of i.i.d. standard-normal directions."""
    if not 1 <= q <= dim:
        raise ValueError(f"need 1 <= q <= dim, got q={q}, dim={dim}")
    U = rng.standard_normal((int(dim), int(q)))
    return DirectionBlock(U=U, q=int(q), seed=rng.seed)


class EstimatorKind(Enum):
    SINGLE = "single"
    AVG = "avg"
    ALIGN = "align"


@dataclass(frozen=True)
class GradientEstimate:
    """A gradient estimate plus the measurements it was built from.

    ``dir_derivs[i]`` is the finite-difference quotient
    ``(f(x + h u_i) - f(x)) / h`` along column ``i`` of the block (or the
    exact directional derivative in idealized mode).  ``queries_used``
    counts raw evaluations, ``q + 1``: the q perturbed points plus the
    shared base value f(x).
    """

    g_hat: np.ndarray
    kind: EstimatorKind
    q: int
    smoothing: float
    queries_used: int
    dir_derivs: np.ndarray

    def __post_init__(self):
        if self.smoothing <= 0:
            raise ValueError("smoothing must be positive")
        if self.queries_used != self.q + 1:
            raise ValueError("queries_used must equal q + 1")
        object.__setattr__(self, "g_hat", as_vec(self.g_hat, name="g_hat"))
        dd = np.asarray(self.dir_derivs, dtype=float)
        if dd.shape != (self.q,):
            raise ValueError("dir_derivs must have length q")
        object.__setattr__(self, "dir_derivs", dd)


class Objective:
    """Black-box objective contract.

    Subclasses provide ``value`` and usually an analytic ``gradient`` used
    as a testing oracle and for idealized-mode estimation.  Stochastic
    objectives additionally expose ``stochastic_value(x, sample_key)``, one
    deterministic realization per key.

    Attributes
    ----------
    dim : ambient dimension d.
    L : smoothness constant (gradient Lipschitz).
    mu_sc : strong-convexity constant, or None.
    sigma2 : variance bound of the stochastic gradient at the optimum, or None.
    optimum : tuple (x_star, f_star), or None when unknown / not attained.
    """

    def __init__(self, dim: int, L: float, mu_sc: float | None = None,
                 sigma2: float | None = None, optimum=None):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        if not np.isfinite(L) or L <= 0:
            raise ValueError(f"L must be positive and finite, got {L}")
        if mu_sc is not None:
            if mu_sc <= 0:
                raise ValueError(f"mu_sc must be positive, got {mu_sc}")
            if mu_sc > L * (1 + 1e-12):
                raise ValueError(f"mu_sc={mu_sc} exceeds L={L}")
        if sigma2 is not None and sigma2 < 0:
            raise ValueError(f"sigma2 must be >= 0, got {sigma2}")
        if optimum is not None:
            x_star, f_star = optimum
            optimum = (as_vec(x_star, dim, name="x_star"), float(f_star))
        self.dim = int(dim)
        self.L = float(L)
        self.mu_sc = None if mu_sc is None else float(mu_sc)
        self.sigma2 = None if sigma2 is None else float(sigma2)
        self.optimum = optimum

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no gradient oracle")

    def stochastic_value(self, x: np.ndarray, sample_key: int) -> float:
        raise NotImplementedError(f"{type(self).__name__} is not stochastic")

    @property
    def has_gradient(self) -> bool:
        return type(self).gradient is not Objective.gradient

    @property
    def has_stochastic(self) -> bool:
        return type(self).stochastic_value is not Objective.stochastic_value

    def checked_value(self, x: np.ndarray) -> float:
        """Evaluate and reject non-finite results."""
        v = float(self.value(x))
        if not np.isfinite(v):
            raise EvaluationError(f"objective returned non-finite value {v}", x=x)
        return v
