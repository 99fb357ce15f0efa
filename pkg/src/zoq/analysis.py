"""Statistical verification: closed-form estimator moments, Monte Carlo
cross-checks, theorem bound evaluation along trajectories, and empirical
rate fitting.

All Monte Carlo comparisons report normal-approximation standard errors;
callers decide the band (3-4 standard errors throughout the test suite).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import minimize

from .core import EstimatorKind, Objective, SeededRng, as_vec
from .errors import ConfigurationError, FitError, NumericalError
from .optimizer import Trajectory

__all__ = [
    "MomentReport",
    "BoundCurve",
    "Theorem",
    "mse_closed_form",
    "sq_norm_closed_form",
    "mse_monte_carlo",
    "idealized_estimates",
    "bound_curve",
    "fit_log_linear_rate",
    "reference_minimizer",
    "measure_sigma2",
    "stochastic_sq_gradnorm",
    "verification_battery",
]

_MIN_MC_SAMPLES = 1000
_GAP_FLOOR = 1e-12
_TRANSIENT_FRACTION = 0.1


def _check_dq(d: int, q: int) -> None:
    if not 1 <= q <= d:
        raise ValueError(f"need 1 <= q <= d, got q={q}, d={d}")


def mse_closed_form(kind: EstimatorKind, d: int, q: int, g_norm2: float) -> float:
    """Closed-form mean squared error E||g_hat - g||^2 of the idealized
    estimators: (d+1)/q * ||g||^2 for averaging (and single at q=1),
    (d-q)/d * ||g||^2 for alignment."""
    _check_dq(d, q)
    if g_norm2 < 0:
        raise ValueError(f"g_norm2 must be >= 0, got {g_norm2}")
    if kind is EstimatorKind.ALIGN:
        return (d - q) / d * g_norm2
    if kind is EstimatorKind.SINGLE and q != 1:
        raise ValueError("single-query estimator has q = 1")
    return (d + 1) / q * g_norm2


def sq_norm_closed_form(kind: EstimatorKind, d: int, q: int, g_norm2: float) -> float:
    """Closed-form second moment E||g_hat||^2: (q+d+1)/q * ||g||^2 for
    averaging, (q/d) * ||g||^2 for alignment."""
    _check_dq(d, q)
    if kind is EstimatorKind.ALIGN:
        return q / d * g_norm2
    if kind is EstimatorKind.SINGLE and q != 1:
        raise ValueError("single-query estimator has q = 1")
    return (q + d + 1) / q * g_norm2


def idealized_estimates(kind: EstimatorKind, g: np.ndarray, blocks: np.ndarray) -> np.ndarray:
    """Idealized estimates for a stack of direction blocks.

    ``blocks`` has shape (n, d, q); returns the (n, d) stack of estimates.
    Averaging uses (1/q) U U'g directly; alignment projects g onto span(U)
    through an orthonormal basis, Q Q'g.
    """
    g = as_vec(g)
    n, d, q = blocks.shape
    if kind is EstimatorKind.ALIGN:
        Q = np.linalg.qr(blocks)[0]
        return np.einsum("ndq,nq->nd", Q, np.einsum("ndq,d->nq", Q, g))
    return np.einsum("ndq,nq->nd", blocks, np.einsum("ndq,d->nq", blocks, g)) / q


@dataclass
class MomentReport:
    """Monte Carlo moments of one estimator configuration against the
    closed forms.  ``stderr``/``z_score`` refer to the MSE comparison;
    per-coordinate standard errors of the mean and the second-moment
    comparison ride along for the moment tests."""

    kind: EstimatorKind
    d: int
    q: int
    n_samples: int
    empirical_mean: np.ndarray
    empirical_mse: float
    closed_form_mse: float
    stderr: float
    z_score: float
    mean_stderr: np.ndarray
    empirical_sq_norm: float
    closed_form_sq_norm: float
    sq_norm_stderr: float
    sq_norm_z: float

    @staticmethod
    def csv_header() -> list[str]:
        return ["kind", "d", "q", "n_samples", "empirical_mse",
                "closed_form_mse", "stderr", "z_score"]

    def csv_row(self) -> list:
        return [self.kind.value, self.d, self.q, self.n_samples,
                self.empirical_mse, self.closed_form_mse, self.stderr,
                self.z_score]


def _safe_z(diff: float, stderr: float) -> float:
    if stderr == 0.0:
        return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
    return diff / stderr


def mse_monte_carlo(kind: EstimatorKind, obj: Objective, x, q: int, N: int,
                    rng: SeededRng, chunk: int = 2048) -> MomentReport:
    """Empirical estimator moments over N fresh idealized blocks at x.

    Requires the objective's gradient oracle.  Draws blocks in fixed-size
    chunks so results are deterministic in (seed, stream_id).
    """
    if N < _MIN_MC_SAMPLES:
        raise ValueError(f"need N >= {_MIN_MC_SAMPLES}, got N={N}")
    x = as_vec(x, obj.dim)
    if not obj.has_gradient:
        raise ValueError("mse_monte_carlo needs a gradient oracle")
    _check_dq(obj.dim, q)
    g = obj.gradient(x)
    g_norm2 = float(g @ g)
    d = obj.dim
    sum_g = np.zeros(d)
    sum_g2 = np.zeros(d)
    s_sum = s_sum2 = 0.0
    n_sum = n_sum2 = 0.0
    done = 0
    while done < N:
        m = min(chunk, N - done)
        blocks = rng.standard_normal((m, d, q))
        est = idealized_estimates(kind, g, blocks)
        sum_g += est.sum(axis=0)
        sum_g2 += (est**2).sum(axis=0)
        err2 = ((est - g) ** 2).sum(axis=1)
        s_sum += err2.sum()
        s_sum2 += (err2**2).sum()
        nrm2 = (est**2).sum(axis=1)
        n_sum += nrm2.sum()
        n_sum2 += (nrm2**2).sum()
        done += m
    mean = sum_g / N
    mean_var = np.maximum(sum_g2 / N - mean**2, 0.0)
    mse = s_sum / N
    mse_var = max(s_sum2 / N - mse**2, 0.0)
    stderr = math.sqrt(mse_var / N)
    sqn = n_sum / N
    sqn_var = max(n_sum2 / N - sqn**2, 0.0)
    sqn_stderr = math.sqrt(sqn_var / N)
    closed = mse_closed_form(kind, d, q, g_norm2)
    closed_sqn = sq_norm_closed_form(kind, d, q, g_norm2)
    return MomentReport(
        kind=kind, d=d, q=q, n_samples=N,
        empirical_mean=mean, empirical_mse=mse, closed_form_mse=closed,
        stderr=stderr, z_score=_safe_z(mse - closed, stderr),
        mean_stderr=np.sqrt(mean_var / N),
        empirical_sq_norm=sqn, closed_form_sq_norm=closed_sqn,
        sq_norm_stderr=sqn_stderr,
        sq_norm_z=_safe_z(sqn - closed_sqn, sqn_stderr),
    )


class Theorem(Enum):
    T1 = "T1"  # strongly convex, averaging
    T2 = "T2"  # strongly convex, alignment
    T3 = "T3"  # convex, averaging
    T4 = "T4"  # convex, alignment
    T5 = "T5"  # non-convex, averaging
    T6 = "T6"  # non-convex, alignment
    T7 = "T7"  # stochastic convex, averaging
    T8 = "T8"  # stochastic convex, alignment


@dataclass
class BoundCurve:
    """Right-hand side of one convergence guarantee, per iteration count.

    ``values[i]`` bounds the guaranteed quantity after ``iterations[i]``
    steps of the given allocation: the expected suboptimality gap for
    T1-T4 and T7-T8 (weighted-average iterate for the latter two), the
    minimum expected squared gradient norm for T5, and the average for T6.
    """

    theorem: Theorem
    iterations: np.ndarray
    values: np.ndarray

    @staticmethod
    def csv_header() -> list[str]:
        return ["theorem", "iteration", "bound"]

    def csv_rows(self) -> list[list]:
        return [[self.theorem.value, int(t), float(v)]
                for t, v in zip(self.iterations, self.values)]


def _need(name: str, value) -> float:
    if value is None:
        raise ConfigurationError(f"bound evaluation needs constant {name!r}")
    return float(value)


def bound_curve(theorem: Theorem, *, dim: int, qs, L: float,
                mu_sc: float | None = None, gap0: float | None = None,
                dist0_sq: float | None = None, sigma2: float | None = None,
                eta0: float | None = None) -> BoundCurve:
    """Evaluate the stated convergence bound for an allocation {q_t}.

    ``gap0`` is f(x0) - f_star (for T5/T6 relative to the infimum) and
    ``dist0_sq`` is ||x0 - x_star||^2.  Contraction bounds (T1, T2) are
    defined from iteration 0; telescoping and stochastic bounds need at
    least one completed iteration, so their curves start at iteration 1.
    """
    qs = np.asarray(list(qs), dtype=float)
    if qs.size == 0 or np.any(qs < 1) or np.any(qs > dim):
        raise ConfigurationError("allocation must contain q_t in [1, d]")
    L = _need("L", L)
    d = float(dim)
    T = qs.size
    t1 = np.arange(1, T + 1)

    if theorem in (Theorem.T1, Theorem.T2):
        mu = _need("mu_sc", mu_sc)
        g0 = _need("gap0", gap0)
        if theorem is Theorem.T1:
            factors = 1.0 - mu * qs / (L * (qs + d + 1.0))
        else:
            factors = 1.0 - mu * qs / (L * d)
        values = g0 * np.concatenate([[1.0], np.cumprod(factors)])
        return BoundCurve(theorem, np.arange(0, T + 1), values)

    if theorem is Theorem.T3:
        g0 = _need("gap0", gap0)
        d0 = _need("dist0_sq", dist0_sq)
        denom = np.cumsum(2.0 * qs / (qs + d + 1.0))
        values = L * (d0 + 2.0 / L * g0) / denom
        return BoundCurve(theorem, t1, values)

    if theorem is Theorem.T4:
        g0 = _need("gap0", gap0)
        d0 = _need("dist0_sq", dist0_sq)
        values = d / (2.0 * np.cumsum(qs)) * (L * d0 + 2.0 * g0)
        return BoundCurve(theorem, t1, values)

    if theorem is Theorem.T5:
        g0 = _need("gap0", gap0)
        values = 2.0 * L * g0 / np.cumsum(qs / (qs + d + 1.0))
        return BoundCurve(theorem, t1, values)

    if theorem is Theorem.T6:
        g0 = _need("gap0", gap0)
        values = 2.0 * L * d * g0 / np.cumsum(qs)
        return BoundCurve(theorem, t1, values)

    # stochastic bounds
    d0 = _need("dist0_sq", dist0_sq)
    s2 = _need("sigma2", sigma2)
    e0 = _need("eta0", eta0)
    tt = np.arange(1, T + 1, dtype=float)
    if theorem is Theorem.T7:
        num = d0 + 2.0 * e0**2 * s2 * np.cumsum((qs + d + 1.0) / (qs * tt))
        den = e0 * np.cumsum((d + 1.0 - qs) / (qs * np.sqrt(tt)))
        if np.any(den <= 0):
            raise ConfigurationError("T7 bound degenerates (needs some q_t < d+1)")
    elif theorem is Theorem.T8:
        num = d * d0 + 2.0 * e0**2 * s2 * np.cumsum(qs / tt)
        den = e0 * np.cumsum(qs / np.sqrt(tt))
    else:
        raise ConfigurationError(f"unknown theorem {theorem!r}")
    return BoundCurve(theorem, t1, num / den)


def fit_log_linear_rate(trajs, window: tuple[int, int] | None = None) -> float:
    """Least-squares slope of the mean log suboptimality gap against
    cumulative queries.

    ``trajs`` is one Trajectory or a list sharing a schedule; the mean log
    gap is taken pointwise across them.  The default window drops the
    first 10% of iterations (transient) and everything at or beyond the
    first point where the mean gap falls under 1e-12 (floating-point
    floor).  Raises FitError on nonpositive gaps inside the window or a
    window with fewer than two points.
    """
    if isinstance(trajs, Trajectory):
        trajs = [trajs]
    if not trajs:
        raise FitError("no trajectories to fit")
    cum = trajs[0].cum_queries
    gaps = np.empty((len(trajs), cum.size))
    for i, tr in enumerate(trajs):
        if tr.cum_queries.size != cum.size or np.any(tr.cum_queries != cum):
            raise FitError("trajectories do not share a query grid")
        gaps[i] = tr.gap
    if window is None:
        lo = int(math.ceil(_TRANSIENT_FRACTION * cum.size))
        mean_gap = gaps.mean(axis=0)
        floored = np.where(mean_gap < _GAP_FLOOR)[0]
        hi = int(floored[0]) if floored.size else cum.size
    else:
        lo, hi = window
    if hi - lo < 2:
        raise FitError(f"fit window [{lo}, {hi}) has fewer than two points")
    win = gaps[:, lo:hi]
    if not np.all(np.isfinite(win)) or np.any(win <= 0):
        raise FitError("nonpositive or non-finite gap inside the fit window")
    mean_log = np.log(win).mean(axis=0)
    return float(np.polyfit(cum[lo:hi], mean_log, 1)[0])


def reference_minimizer(obj: Objective, x0=None, grad_tol: float = 1e-8,
                        max_iter: int = 5000):
    """First-order numerical minimizer of the objective.

    Returns (x_ref, f_ref, grad_norm).  Raises NumericalError when the
    gradient norm target is missed, except that callers may pass a looser
    ``grad_tol`` for objectives whose infimum is not attained.
    """
    if not obj.has_gradient:
        raise ValueError("reference_minimizer needs a gradient oracle")
    x0 = np.zeros(obj.dim) if x0 is None else as_vec(x0, obj.dim)
    res = minimize(lambda v: obj.value(v), x0, jac=lambda v: obj.gradient(v),
                   method="L-BFGS-B",
                   options={"maxiter": max_iter, "gtol": grad_tol * 1e-2,
                            "ftol": 0.0})
    x = res.x
    # polish with plain 1/L gradient steps; L-BFGS-B stops on its own norms
    for _ in range(max_iter):
        g = obj.gradient(x)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= grad_tol:
            break
        x = x - g / obj.L
    else:
        gnorm = float(np.linalg.norm(obj.gradient(x)))
    if gnorm > grad_tol:
        raise NumericalError(
            f"reference solve stalled at gradient norm {gnorm:.3g} "
            f"(target {grad_tol:.3g})")
    return x, float(obj.value(x)), gnorm


def stochastic_sq_gradnorm(obj, x, n_batches: int, rng: SeededRng):
    """Monte Carlo estimate of E_xi ||grad F(x, xi)||^2 with its standard
    error, over ``n_batches`` fresh mini-batch keys."""
    x = as_vec(x, obj.dim)
    vals = np.empty(n_batches)
    for i in range(n_batches):
        g = obj.stochastic_gradient(x, rng.next_key())
        vals[i] = g @ g
    mean = float(vals.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(n_batches))
    return mean, stderr


def measure_sigma2(obj, n_batches: int, rng: SeededRng, x_star=None):
    """Empirical variance bound at the optimum: the mean of
    ||grad F(x_star, xi)||^2 over fresh batches, with its standard error.
    Solves for x_star numerically when not supplied."""
    if x_star is None:
        x_star, _, _ = reference_minimizer(obj)
    mean, stderr = stochastic_sq_gradnorm(obj, x_star, n_batches, rng)
    return x_star, mean, stderr


@dataclass
class CheckResult:
    name: str
    d: int
    q: int
    target: float
    empirical: float
    stderr: float
    z_score: float
    band: float
    passed: bool

    @staticmethod
    def csv_header() -> list[str]:
        return ["check", "d", "q", "target", "empirical", "stderr",
                "z_score", "band", "passed"]

    def csv_row(self) -> list:
        return [self.name, self.d, self.q, self.target, self.empirical,
                self.stderr, self.z_score, self.band, int(self.passed)]


def verification_battery(rng: SeededRng, n_samples: int = 100_000, d: int = 20,
                         qs=(1, 5, 10, 20), inject_wrong_constant: bool = False
                         ) -> list[CheckResult]:
    """Monte Carlo battery for the estimator moment identities.

    For each block size: the averaging estimator's mean must match the
    gradient and the alignment estimator's mean must match (q/d) times it
    (3 standard errors per coordinate); both MSEs and second moments must
    match their closed forms (4 standard errors, with a tiny absolute
    slack so the exactly-zero alignment MSE at q = d is testable).

    ``inject_wrong_constant`` deliberately corrupts the averaging MSE
    target (d+2 in place of d+1) as a self-test of the battery's power.
    """
    from .objectives import make_quadratic

    obj = make_quadratic(d, 1.0, rng.derive(1))
    x = rng.derive(2).standard_normal(d)
    g = obj.gradient(x)
    g_norm2 = float(g @ g)
    results: list[CheckResult] = []

    def add(name, q, target, empirical, stderr, band_se):
        z = _safe_z(empirical - target, stderr)
        # relative slack absorbs floating-point dust where the estimator is
        # exact (q = d) and the Monte Carlo spread collapses to zero
        band = band_se * stderr + 1e-11 * (1.0 + abs(target))
        results.append(CheckResult(name, d, q, target, empirical, stderr, z,
                                   band, abs(empirical - target) <= band))

    for q in qs:
        for kind in (EstimatorKind.AVG, EstimatorKind.ALIGN):
            rep = mse_monte_carlo(kind, obj, x, q, n_samples, rng)
            mse_target = rep.closed_form_mse
            if inject_wrong_constant and kind is EstimatorKind.AVG:
                mse_target = (d + 2) / q * g_norm2
            add(f"mse_{kind.value}", q, mse_target, rep.empirical_mse,
                rep.stderr, 4.0)
            add(f"sq_norm_{kind.value}", q, rep.closed_form_sq_norm,
                rep.empirical_sq_norm, rep.sq_norm_stderr, 4.0)
            mean_target = g if kind is EstimatorKind.AVG else q / d * g
            dev = np.abs(rep.empirical_mean - mean_target)
            worst = int(np.argmax(dev - 3.0 * rep.mean_stderr))
            add(f"mean_{kind.value}", q, float(mean_target[worst]),
                float(rep.empirical_mean[worst]), float(rep.mean_stderr[worst]),
                3.0)
    return results
