"""Budget-constrained optimization loops x_{t+1} = x_t - eta_t g_hat(x_t).

Budget accounting follows the per-iteration query count q_t: a run with
allocation {q_t} consumes sum(q_t) queries of its budget K, while raw
evaluations (q_t + 1 per block, the base value included) are tracked
separately in the trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import EstimatorKind, Objective, SeededRng, as_vec
from .errors import ConfigurationError, DivergenceError
from .estimators import EstimatorConfig, Mode, estimate

__all__ = [
    "AllocationSchedule",
    "StepPolicy",
    "Trajectory",
    "allocation_expand",
    "averaging_weight",
    "run_deterministic",
    "run_stochastic",
    "weighted_average",
]

#: sub-stream offset used for mini-batch keys inside run_stochastic; the
#: direction stream is the rng passed in.  Callers handing out per-worker
#: streams should space stream ids by at least 8.
_BATCH_KEY_OFFSET = 1


@dataclass(frozen=True)
class AllocationSchedule:
    """Queries-per-iteration sequence under a total budget K.

    Kinds: ``single`` (q_t = 1), ``full`` (q_t = d), ``constant`` (fixed q),
    ``custom`` (explicit list).  When K is not a multiple of the block size
    the final iteration uses the leftover budget as a smaller block, so the
    expanded schedule always sums to exactly K.
    """

    kind: str
    budget: int
    q: int | None = None
    qs: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("single", "full", "constant", "custom"):
            raise ConfigurationError(f"unknown schedule kind {self.kind!r}")
        if self.budget < 1:
            raise ConfigurationError(f"budget must be >= 1, got {self.budget}")
        if self.kind == "constant" and (self.q is None or self.q < 1):
            raise ConfigurationError("constant schedule needs q >= 1")
        if self.kind == "custom" and not self.qs:
            raise ConfigurationError("custom schedule needs a nonempty q list")

    @classmethod
    def single_query(cls, budget: int) -> "AllocationSchedule":
        return cls("single", budget)

    @classmethod
    def full_subspace(cls, budget: int) -> "AllocationSchedule":
        return cls("full", budget)

    @classmethod
    def constant_q(cls, q: int, budget: int) -> "AllocationSchedule":
        return cls("constant", budget, q=q)

    @classmethod
    def custom(cls, qs, budget: int) -> "AllocationSchedule":
        return cls("custom", budget, qs=tuple(int(v) for v in qs))

    def label(self) -> str:
        return {"single": "q=1", "full": "q=d",
                "constant": f"q={self.q}", "custom": "custom"}[self.kind]


def allocation_expand(sched: AllocationSchedule, dim: int) -> list[int]:
    """Explicit per-iteration query counts; sums to the budget."""
    K = sched.budget
    if sched.kind == "single":
        return [1] * K
    if sched.kind in ("full", "constant"):
        q = dim if sched.kind == "full" else int(sched.q)
        if q > dim:
            raise ConfigurationError(f"q={q} exceeds dimension d={dim}")
        if K < q:
            raise ConfigurationError(
                f"budget K={K} smaller than one block of q={q} queries")
        qs = [q] * (K // q)
        if K % q:
            qs.append(K % q)
        return qs
    qs = list(sched.qs)
    if any(not 1 <= v <= dim for v in qs):
        raise ConfigurationError(f"custom q_t values must lie in [1, {dim}]")
    if sum(qs) > K:
        raise ConfigurationError(
            f"custom schedule consumes {sum(qs)} queries, budget is {K}")
    return qs


@dataclass(frozen=True)
class StepPolicy:
    """Step-size rule.

    * ``avg_optimal``: eta_t = q_t / (L (q_t + d + 1)), for the averaging
      and single-query estimators.
    * ``align_optimal``: eta_t = 1 / L, for the alignment estimator.
    * ``diminishing_sqrt``: eta_t = eta0 / sqrt(t + 1) with eta0 <= 1/(4L),
      for stochastic runs.
    """

    kind: str
    eta0: float | None = None

    def __post_init__(self):
        if self.kind not in ("avg_optimal", "align_optimal", "diminishing_sqrt"):
            raise ConfigurationError(f"unknown step policy {self.kind!r}")
        if self.kind == "diminishing_sqrt":
            if self.eta0 is None or self.eta0 <= 0:
                raise ConfigurationError("diminishing_sqrt needs eta0 > 0")

    @classmethod
    def avg_optimal(cls) -> "StepPolicy":
        return cls("avg_optimal")

    @classmethod
    def align_optimal(cls) -> "StepPolicy":
        return cls("align_optimal")

    @classmethod
    def diminishing_sqrt(cls, eta0: float) -> "StepPolicy":
        return cls("diminishing_sqrt", eta0=eta0)

    def eta(self, t: int, q_t: int, L: float, dim: int) -> float:
        if self.kind == "avg_optimal":
            return q_t / (L * (q_t + dim + 1))
        if self.kind == "align_optimal":
            return 1.0 / L
        return self.eta0 / math.sqrt(t + 1.0)

    def check_compatible(self, kind: EstimatorKind, L: float) -> None:
        if self.kind == "avg_optimal" and kind is EstimatorKind.ALIGN:
            raise ConfigurationError("avg_optimal steps pair with avg/single estimators")
        if self.kind == "align_optimal" and kind is not EstimatorKind.ALIGN:
            raise ConfigurationError("align_optimal steps pair with the align estimator")
        if self.kind == "diminishing_sqrt" and self.eta0 > 1.0 / (4.0 * L) * (1 + 1e-12):
            raise ConfigurationError(
                f"diminishing_sqrt needs eta0 <= 1/(4L) = {1.0 / (4.0 * L):.3g}, "
                f"got {self.eta0:.3g}")


@dataclass
class Trajectory:
    """Per-iteration log of one run.

    Row t records the state reached after iteration t: ``f[t]`` is
    f(x_{t+1}) and ``cum_queries[t]`` the queries consumed through that
    iteration, so curves terminate exactly at the budget.  ``gap`` is
    f - f_star when the optimum is known (NaN otherwise) and
    ``grad_norm2`` uses the gradient oracle when available.  Stochastic
    runs additionally carry the per-sample realization values and the
    weighted-average iterate with its objective value.
    """

    dim: int
    budget: int
    kind: EstimatorKind
    seed: int
    stream_id: int
    t: np.ndarray
    q: np.ndarray
    cum_queries: np.ndarray
    eta: np.ndarray
    f: np.ndarray
    gap: np.ndarray
    grad_norm2: np.ndarray
    x0: np.ndarray
    f0: float
    x_final: np.ndarray
    paper_queries: int
    raw_evaluations: int
    f_sample: np.ndarray | None = None
    x_weighted: np.ndarray | None = None
    f_weighted: float | None = None

    @property
    def iterations(self) -> int:
        return len(self.t)

    @property
    def f_star(self) -> float:
        return float(self.f[0] - self.gap[0])

    @property
    def gap0(self) -> float:
        return self.f0 - self.f_star


def _grad_norm2(obj: Objective, x: np.ndarray) -> float:
    if not obj.has_gradient:
        return math.nan
    g = obj.gradient(x)
    return float(g @ g)


def _divergence_limit(f0: float) -> float:
    # "exceeds a million times the start" with slack for starts near zero
    return 1e6 * (1.0 + abs(f0))


def _diverged(x, f_new, limit) -> bool:
    return not (np.all(np.isfinite(x)) and np.isfinite(f_new)) or abs(f_new) > limit


def run_deterministic(obj: Objective, est_cfg: EstimatorConfig,
                      sched: AllocationSchedule, policy: StepPolicy,
                      x0, rng: SeededRng) -> Trajectory:
    """Run until the budget is exhausted using exact function queries."""
    qs = allocation_expand(sched, obj.dim)
    policy.check_compatible(est_cfg.kind, obj.L)
    if est_cfg.kind is EstimatorKind.SINGLE and any(q != 1 for q in qs):
        raise ConfigurationError("single-query estimator requires q_t = 1 throughout")
    if est_cfg.mode is Mode.IDEALIZED_ORACLE and not obj.has_gradient:
        raise ConfigurationError("idealized mode needs a gradient oracle")
    x = as_vec(x0, obj.dim).copy()
    f_star = obj.optimum[1] if obj.optimum is not None else math.nan
    f_curr = obj.checked_value(x)
    f0 = f_curr
    limit = _divergence_limit(f0)
    T = len(qs)
    log_q = np.asarray(qs, dtype=int)
    log_cum = np.cumsum(log_q)
    log_eta = np.empty(T)
    log_f = np.empty(T)
    log_gn2 = np.empty(T)

    def make_traj(upto: int, x_now: np.ndarray) -> Trajectory:
        return Trajectory(
            dim=obj.dim, budget=sched.budget, kind=est_cfg.kind,
            seed=rng.seed, stream_id=rng.stream_id,
            t=np.arange(upto), q=log_q[:upto], cum_queries=log_cum[:upto],
            eta=log_eta[:upto], f=log_f[:upto], gap=log_f[:upto] - f_star,
            grad_norm2=log_gn2[:upto],
            x0=as_vec(x0, obj.dim), f0=f0, x_final=x_now,
            paper_queries=int(log_cum[upto - 1]) if upto else 0,
            raw_evaluations=(int(log_cum[upto - 1]) + upto) if upto else 0,
        )

    for t, q_t in enumerate(qs):
        eta_t = policy.eta(t, q_t, obj.L, obj.dim)
        est = estimate(obj, x, est_cfg.with_q(q_t), rng, base_value=f_curr)
        x_prev = x
        x = x - eta_t * est.g_hat
        f_new = float(obj.value(x))
        if _diverged(x, f_new, limit):
            err = DivergenceError(
                f"run diverged at iteration {t} (f={f_new!r})", x_last=x_prev, t=t)
            err.partial = make_traj(t, x_prev)
            raise err
        f_curr = f_new
        log_eta[t] = eta_t
        log_f[t] = f_new
        log_gn2[t] = _grad_norm2(obj, x)
    return make_traj(T, x)


class _Realization(Objective):
    """One stochastic realization F(., xi) frozen at a sample key."""

    def __init__(self, obj: Objective, key: int):
        self._obj = obj
        self._key = key
        super().__init__(obj.dim, L=obj.L)

    def value(self, x):
        return self._obj.stochastic_value(x, self._key)

    def gradient(self, x):
        return self._obj.stochastic_gradient(x, self._key)

    @property
    def has_gradient(self) -> bool:
        return hasattr(self._obj, "stochastic_gradient")


def averaging_weight(kind: EstimatorKind, eta_t: float, q_t: int, dim: int) -> float:
    """Iterate-averaging weight of iteration t in the diminishing-step
    analysis: eta_t q_t / d for alignment, eta_t (d + 1 - q_t) / q_t for
    averaging and single-query."""
    if kind is EstimatorKind.ALIGN:
        return eta_t * q_t / dim
    return eta_t * (dim + 1 - q_t) / q_t


def weighted_average(iterates, weights) -> np.ndarray:
    """Convex combination sum(w_t x_t) / sum(w_t); with equal weights this
    reduces to the arithmetic mean."""
    iterates = np.asarray(iterates, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if iterates.shape[0] != weights.shape[0] or iterates.shape[0] == 0:
        raise ValueError("need one weight per iterate")
    total = float(weights.sum())
    if total <= 0:
        raise ValueError("weights must have positive sum")
    return (weights[:, None] * iterates).sum(axis=0) / total


def run_stochastic(obj: Objective, est_cfg: EstimatorConfig,
                   sched: AllocationSchedule, policy: StepPolicy,
                   x0, rng: SeededRng) -> Trajectory:
    """Budgeted run against a stochastic oracle.

    Each iteration draws one sample key and builds the whole estimator
    block from that single realization.  Reported objective values come
    from ``obj.report_value`` when defined (held-out estimate), else from
    ``obj.value``; neither consumes budget.  The trajectory also carries
    the weighted-average iterate over x_0 .. x_{T-1}.
    """
    if not obj.has_stochastic:
        raise ConfigurationError("objective provides no stochastic_value")
    if policy.kind != "diminishing_sqrt":
        raise ConfigurationError("stochastic runs use the diminishing_sqrt policy")
    qs = allocation_expand(sched, obj.dim)
    policy.check_compatible(est_cfg.kind, obj.L)
    if est_cfg.kind is EstimatorKind.SINGLE and any(q != 1 for q in qs):
        raise ConfigurationError("single-query estimator requires q_t = 1 throughout")
    report = getattr(obj, "report_value", obj.value)
    key_rng = rng.derive(_BATCH_KEY_OFFSET)
    x = as_vec(x0, obj.dim).copy()
    f0 = float(report(x))
    limit = _divergence_limit(f0)
    T = len(qs)
    log_q = np.asarray(qs, dtype=int)
    log_cum = np.cumsum(log_q)
    log_eta = np.empty(T)
    log_f = np.empty(T)
    log_fs = np.empty(T)
    log_gn2 = np.empty(T)
    f_star = obj.optimum[1] if obj.optimum is not None else math.nan
    w_sum = 0.0
    x_weighted = np.zeros_like(x)

    def make_traj(upto: int, x_now: np.ndarray, xw=None, fw=None) -> Trajectory:
        return Trajectory(
            dim=obj.dim, budget=sched.budget, kind=est_cfg.kind,
            seed=rng.seed, stream_id=rng.stream_id,
            t=np.arange(upto), q=log_q[:upto], cum_queries=log_cum[:upto],
            eta=log_eta[:upto], f=log_f[:upto], gap=log_f[:upto] - f_star,
            grad_norm2=log_gn2[:upto],
            x0=as_vec(x0, obj.dim), f0=f0, x_final=x_now,
            paper_queries=int(log_cum[upto - 1]) if upto else 0,
            raw_evaluations=(int(log_cum[upto - 1]) + upto) if upto else 0,
            f_sample=log_fs[:upto], x_weighted=xw, f_weighted=fw,
        )

    for t, q_t in enumerate(qs):
        eta_t = policy.eta(t, q_t, obj.L, obj.dim)
        w = averaging_weight(est_cfg.kind, eta_t, q_t, obj.dim)
        w_sum += w
        x_weighted = x_weighted + w * x
        realization = _Realization(obj, key_rng.next_key())
        base = realization.checked_value(x)
        est = estimate(realization, x, est_cfg.with_q(q_t), rng, base_value=base)
        x_prev = x
        x = x - eta_t * est.g_hat
        f_new = float(report(x))
        if _diverged(x, f_new, limit):
            err = DivergenceError(
                f"run diverged at iteration {t} (f={f_new!r})", x_last=x_prev, t=t)
            err.partial = make_traj(t, x_prev)
            raise err
        log_eta[t] = eta_t
        log_f[t] = f_new
        log_fs[t] = base
        log_gn2[t] = _grad_norm2(obj, x)
    x_weighted = x_weighted / w_sum
    return make_traj(T, x, xw=x_weighted, fw=float(report(x_weighted)))
