"""Multi-query gradient estimators built from value queries along random
Gaussian directions.

Three estimators are provided.  Writing z_i for the measured
finite-difference quotient along direction u_i:

* single: one direction, g = z_1 u_1.
* averaging: g = (1/q) sum_i z_i u_i, the mean of q single-direction
  estimates sharing one base value f(x).
* alignment: g = U y with y solving U'(U y) = z, so the estimate's own
  directional derivatives reproduce the measured ones.  In idealized mode
  this is the orthogonal projection of the oracle gradient onto span(U).

Each estimator also runs in idealized mode, replacing the quotients with
exact directional derivatives from the objective's gradient oracle; this
isolates the geometric error of the aggregation rule from smoothing error.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import qr, solve_triangular

from .core import (
    MAX_BLOCK_CONDITION,
    DirectionBlock,
    EstimatorKind,
    GradientEstimate,
    Objective,
    SeededRng,
    as_vec,
    sample_direction_block,
)
from .errors import DegenerateBlockError, EvaluationError

__all__ = [
    "Mode",
    "EstimatorConfig",
    "estimate",
    "estimate_single",
    "estimate_avg",
    "estimate_align",
    "projection_residual",
    "default_smoothing",
]


class Mode(Enum):
    FINITE_DIFFERENCE = "fd"
    IDEALIZED_ORACLE = "oracle"


@dataclass(frozen=True)
class EstimatorConfig:
    """How to build one gradient estimate.

    ``smoothing`` is the finite-difference step h; None selects the default
    relative rule h = 1e-6 * (1 + ||x||), which keeps the Taylor remainder
    O(h L) small uniformly along a trajectory.
    """

    kind: EstimatorKind
    q: int = 1
    smoothing: float | None = None
    mode: Mode = Mode.FINITE_DIFFERENCE

    def __post_init__(self):
        if self.q < 1:
            raise ValueError(f"q must be >= 1, got {self.q}")
        if self.kind is EstimatorKind.SINGLE and self.q != 1:
            raise ValueError("single-query estimator requires q = 1")
        if self.smoothing is not None and self.smoothing <= 0:
            raise ValueError(f"smoothing must be positive, got {self.smoothing}")

    def with_q(self, q: int) -> "EstimatorConfig":
        return EstimatorConfig(self.kind, q, self.smoothing, self.mode)


def default_smoothing(x: np.ndarray) -> float:
    return 1e-6 * (1.0 + float(np.linalg.norm(x)))


def _directional_data(obj: Objective, x: np.ndarray, block: DirectionBlock,
                      cfg: EstimatorConfig, base_value: float | None):
    """Measured quotients z (length q) and the resolved smoothing step."""
    h = cfg.smoothing if cfg.smoothing is not None else default_smoothing(x)
    if cfg.mode is Mode.IDEALIZED_ORACLE:
        return block.U.T @ obj.gradient(x), h
    base = obj.checked_value(x) if base_value is None else float(base_value)
    z = np.empty(block.q)
    for i in range(block.q):
        xi = x + h * block.U[:, i]
        fi = float(obj.value(xi))
        if not np.isfinite(fi):
            raise EvaluationError(f"objective returned non-finite value {fi}", x=xi)
        z[i] = (fi - base) / h
    return z, h


def _check_preconditions(obj: Objective, x, cfg: EstimatorConfig):
    x = as_vec(x, obj.dim)
    if cfg.q > obj.dim:
        raise ValueError(f"q={cfg.q} exceeds dimension d={obj.dim}")
    return x


def estimate_single(obj: Objective, x, cfg: EstimatorConfig, rng: SeededRng,
                    block: DirectionBlock | None = None,
                    base_value: float | None = None) -> GradientEstimate:
    """Single-direction estimate g = ((f(x + h u) - f(x)) / h) u."""
    if cfg.kind is not EstimatorKind.SINGLE:
        raise ValueError(f"estimate_single got kind {cfg.kind}")
    x = _check_preconditions(obj, x, cfg)
    if block is None:
        block = sample_direction_block(obj.dim, 1, rng)
    z, h = _directional_data(obj, x, block, cfg, base_value)
    g_hat = z[0] * block.U[:, 0]
    return GradientEstimate(g_hat, EstimatorKind.SINGLE, 1, h, 2, z)


def estimate_avg(obj: Objective, x, cfg: EstimatorConfig, rng: SeededRng,
                 block: DirectionBlock | None = None,
                 base_value: float | None = None) -> GradientEstimate:
    """Average of q single-direction estimates over one fresh block."""
    if cfg.kind is not EstimatorKind.AVG:
        raise ValueError(f"estimate_avg got kind {cfg.kind}")
    x = _check_preconditions(obj, x, cfg)
    if block is None:
        block = sample_direction_block(obj.dim, cfg.q, rng)
    if block.q != cfg.q:
        raise ValueError(f"block has q={block.q}, config expects {cfg.q}")
    z, h = _directional_data(obj, x, block, cfg, base_value)
    g_hat = (block.U @ z) / cfg.q
    return GradientEstimate(g_hat, EstimatorKind.AVG, cfg.q, h, cfg.q + 1, z)


def _solve_alignment(U: np.ndarray, z: np.ndarray) -> np.ndarray:
    """g in span(U) with U'g = z, via rank-revealing (column-pivoted) QR.

    With U[:, piv] = Q R and g = Q w, the system U'Q w = z permutes to the
    triangular solve R' w = z[piv].  Raises DegenerateBlockError when the
    pivoted diagonal signals a condition estimate above the threshold.
    """
    Q, R, piv = qr(U, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag[-1] == 0.0 or diag[0] / diag[-1] > MAX_BLOCK_CONDITION:
        raise DegenerateBlockError(
            f"direction block numerically rank-deficient "
            f"(pivot ratio {diag[0]:.3g}/{diag[-1]:.3g})")
    w = solve_triangular(R.T, z[piv], lower=True)
    return Q @ w


def estimate_align(obj: Objective, x, cfg: EstimatorConfig, rng: SeededRng,
                   block: DirectionBlock | None = None,
                   base_value: float | None = None) -> GradientEstimate:
    """Alignment estimate: the vector in span(U) whose directional
    derivatives match the measured quotients.

    A freshly sampled block that fails the rank check is resampled once
    (Gaussian blocks are degenerate with negligible probability); an
    explicitly supplied degenerate block raises immediately.
    """
    if cfg.kind is not EstimatorKind.ALIGN:
        raise ValueError(f"estimate_align got kind {cfg.kind}")
    x = _check_preconditions(obj, x, cfg)
    resamples = 0 if block is not None else 1
    if block is None:
        block = sample_direction_block(obj.dim, cfg.q, rng)
    if block.q != cfg.q:
        raise ValueError(f"block has q={block.q}, config expects {cfg.q}")
    z, h = _directional_data(obj, x, block, cfg, base_value)
    while True:
        try:
            g_hat = _solve_alignment(block.U, z)
            break
        except DegenerateBlockError:
            if resamples <= 0:
                raise
            resamples -= 1
            block = sample_direction_block(obj.dim, cfg.q, rng)
            z, h = _directional_data(obj, x, block, cfg, base_value)
    return GradientEstimate(g_hat, EstimatorKind.ALIGN, cfg.q, h, cfg.q + 1, z)


_DISPATCH = {
    EstimatorKind.SINGLE: estimate_single,
    EstimatorKind.AVG: estimate_avg,
    EstimatorKind.ALIGN: estimate_align,
}


def estimate(obj: Objective, x, cfg: EstimatorConfig, rng: SeededRng,
             block: DirectionBlock | None = None,
             base_value: float | None = None) -> GradientEstimate:
    """Dispatch on ``cfg.kind``."""
    return _DISPATCH[cfg.kind](obj, x, cfg, rng, block=block, base_value=base_value)


def projection_residual(est: GradientEstimate, block: DirectionBlock) -> float:
    """max_i |u_i'g - z_i|: how far the estimate's directional derivatives
    are from the measured ones.  Zero (to solver tolerance) for alignment
    estimates; generically positive for averaging."""
    if est.q != block.q:
        raise ValueError(f"estimate has q={est.q}, block has q={block.q}")
    if est.g_hat.shape[0] != block.dim:
        raise ValueError("estimate and block dimensions differ")
    return float(np.max(np.abs(block.U.T @ est.g_hat - est.dir_derivs)))
