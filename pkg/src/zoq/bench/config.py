"""Experiment configuration: a small TOML schema describing one sweep.

Top-level keys: ``seed``, ``replications``, ``budgets`` (list of total
query budgets), ``output`` (default output directory), an ``[objective]``
table, and one ``[[combo]]`` table per estimator/schedule/policy
combination.  See ``configs/example.toml`` for a commented example.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..core import EstimatorKind, Objective, SeededRng
from ..errors import ConfigurationError
from ..estimators import EstimatorConfig, Mode
from ..objectives import (
    make_logistic,
    make_quadratic,
    make_rosenbrock,
    make_stochastic_logistic,
)
from ..optimizer import AllocationSchedule, StepPolicy, allocation_expand

__all__ = ["ObjectiveSpec", "ComboSpec", "ExperimentConfig",
           "load_config", "parse_config", "build_objective"]

#: stream id reserved for objective generation, far above replication streams.
OBJECTIVE_STREAM = 1 << 32

_OBJECTIVE_KINDS = ("quadratic", "logistic", "rosenbrock", "stochastic_logistic")
_ESTIMATORS = {"single": EstimatorKind.SINGLE, "avg": EstimatorKind.AVG,
               "align": EstimatorKind.ALIGN}
_POLICIES = ("avg_optimal", "align_optimal", "diminishing_sqrt")
_SCHEDULES = ("single", "full", "constant", "custom")
_MODES = {"fd": Mode.FINITE_DIFFERENCE, "oracle": Mode.IDEALIZED_ORACLE}


@dataclass(frozen=True)
class ObjectiveSpec:
    kind: str
    dim: int
    eps: float = 1.0            # quadratic
    m: int | None = None        # logistic sample count, default 10*dim
    batch_size: int = 10        # stochastic logistic
    rho: float = 0.1            # stochastic logistic ridge

    @property
    def stochastic(self) -> bool:
        return self.kind == "stochastic_logistic"


@dataclass(frozen=True)
class ComboSpec:
    name: str
    estimator: EstimatorKind
    schedule: str
    policy: str
    q: int | None = None
    qs: tuple[int, ...] | None = None
    eta0: float | None = None        # None: 1/(4L) at runtime
    mode: Mode = Mode.FINITE_DIFFERENCE
    smoothing: float | None = None
    budgets: tuple[int, ...] | None = None   # None: all config budgets

    def build_schedule(self, budget: int) -> AllocationSchedule:
        if self.schedule == "single":
            return AllocationSchedule.single_query(budget)
        if self.schedule == "full":
            return AllocationSchedule.full_subspace(budget)
        if self.schedule == "constant":
            return AllocationSchedule.constant_q(self.q, budget)
        return AllocationSchedule.custom(self.qs, budget)

    def build_policy(self, L: float) -> StepPolicy:
        if self.policy == "avg_optimal":
            return StepPolicy.avg_optimal()
        if self.policy == "align_optimal":
            return StepPolicy.align_optimal()
        eta0 = self.eta0 if self.eta0 is not None else 1.0 / (4.0 * L)
        return StepPolicy.diminishing_sqrt(eta0)

    def build_estimator(self) -> EstimatorConfig:
        return EstimatorConfig(self.estimator, q=1, smoothing=self.smoothing,
                               mode=self.mode)


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    replications: int
    budgets: tuple[int, ...]
    objective: ObjectiveSpec
    combos: tuple[ComboSpec, ...]
    output: str = "zoq-out"

    def pairs(self):
        """All (budget, combo) pairs this experiment runs."""
        out = []
        for budget in self.budgets:
            for combo in self.combos:
                if combo.budgets is None or budget in combo.budgets:
                    out.append((budget, combo))
        return out


def _fail(where: str, message: str) -> ConfigurationError:
    return ConfigurationError(f"{where}: {message}")


def _get(table: dict, where: str, key: str, kind, default=None, required=False):
    if key not in table:
        if required:
            raise _fail(where, f"missing required key {key!r}")
        return default
    value = table[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if kind is not None and not isinstance(value, kind):
        raise _fail(f"{where}.{key}", f"expected {kind.__name__}, got {value!r}")
    return value


def _parse_objective(table: dict) -> ObjectiveSpec:
    where = "objective"
    kind = _get(table, where, "kind", str, required=True)
    if kind not in _OBJECTIVE_KINDS:
        raise _fail(f"{where}.kind", f"must be one of {_OBJECTIVE_KINDS}, got {kind!r}")
    dim = _get(table, where, "dim", int, required=True)
    if dim < 1 or (kind == "rosenbrock" and dim < 2):
        raise _fail(f"{where}.dim", f"invalid dimension {dim}")
    spec = ObjectiveSpec(
        kind=kind, dim=dim,
        eps=_get(table, where, "eps", float, default=1.0),
        m=_get(table, where, "m", int),
        batch_size=_get(table, where, "batch_size", int, default=10),
        rho=_get(table, where, "rho", float, default=0.1),
    )
    if spec.eps <= 0:
        raise _fail(f"{where}.eps", "must be positive")
    if spec.rho <= 0:
        raise _fail(f"{where}.rho", "must be positive")
    return spec


def _parse_combo(table: dict, idx: int, objective: ObjectiveSpec,
                 budgets: tuple[int, ...]) -> ComboSpec:
    where = f"combo[{idx}]"
    est_name = _get(table, where, "estimator", str, required=True)
    if est_name not in _ESTIMATORS:
        raise _fail(f"{where}.estimator",
                    f"must be one of {sorted(_ESTIMATORS)}, got {est_name!r}")
    estimator = _ESTIMATORS[est_name]
    q = _get(table, where, "q", int)
    qs = _get(table, where, "qs", list)
    schedule = _get(table, where, "schedule", str)
    if schedule is None:
        if qs is not None:
            schedule = "custom"
        elif q is None or q == 1:
            schedule = "single"
            q = 1
        elif q == objective.dim:
            schedule = "full"
        else:
            schedule = "constant"
    if schedule not in _SCHEDULES:
        raise _fail(f"{where}.schedule",
                    f"must be one of {_SCHEDULES}, got {schedule!r}")
    if schedule == "constant" and q is None:
        raise _fail(f"{where}.q", "constant schedule needs q")
    if schedule == "custom" and qs is None:
        raise _fail(f"{where}.qs", "custom schedule needs qs")
    policy = _get(table, where, "policy", str)
    if policy is None:
        if objective.stochastic:
            policy = "diminishing_sqrt"
        elif estimator is EstimatorKind.ALIGN:
            policy = "align_optimal"
        else:
            policy = "avg_optimal"
    if policy not in _POLICIES:
        raise _fail(f"{where}.policy", f"must be one of {_POLICIES}, got {policy!r}")
    if objective.stochastic and policy != "diminishing_sqrt":
        raise _fail(f"{where}.policy",
                    "stochastic objectives need the diminishing_sqrt policy")
    mode_name = _get(table, where, "mode", str, default="fd")
    if mode_name not in _MODES:
        raise _fail(f"{where}.mode", f"must be 'fd' or 'oracle', got {mode_name!r}")
    combo_budgets = _get(table, where, "budgets", list)
    if combo_budgets is not None:
        bad = [b for b in combo_budgets if b not in budgets]
        if bad:
            raise _fail(f"{where}.budgets", f"{bad} not in experiment budgets")
        combo_budgets = tuple(int(b) for b in combo_budgets)
    if schedule == "single":
        label = "q1"
    elif schedule == "full":
        label = f"q{objective.dim}"
    elif schedule == "constant":
        label = f"q{q}"
    else:
        label = "custom"
    name = _get(table, where, "name", str, default=f"{est_name}-{label}")
    return ComboSpec(
        name=name, estimator=estimator, schedule=schedule, policy=policy,
        q=q, qs=None if qs is None else tuple(int(v) for v in qs),
        eta0=_get(table, where, "eta0", float),
        mode=_MODES[mode_name],
        smoothing=_get(table, where, "smoothing", float),
        budgets=combo_budgets,
    )


def parse_config(data: dict, source: str = "<config>") -> ExperimentConfig:
    """Validate a parsed TOML document into an ExperimentConfig.

    Every combo is checked against the optimizer preconditions (allocation
    bounds, estimator/policy pairing) before anything runs.
    """
    try:
        seed = _get(data, "config", "seed", int, required=True)
        reps = _get(data, "config", "replications", int, default=1)
        if reps < 1:
            raise _fail("replications", "must be >= 1")
        budgets = _get(data, "config", "budgets", list, required=True)
        if not budgets or any((not isinstance(b, int)) or b < 1 for b in budgets):
            raise _fail("budgets", "must be a nonempty list of positive integers")
        budgets = tuple(int(b) for b in budgets)
        if "objective" not in data:
            raise _fail("objective", "missing [objective] table")
        objective = _parse_objective(data["objective"])
        combo_tables = data.get("combo", [])
        if not combo_tables:
            raise _fail("combo", "need at least one [[combo]] table")
        combos = tuple(_parse_combo(t, i, objective, budgets)
                       for i, t in enumerate(combo_tables))
        names = [c.name for c in combos]
        if len(set(names)) != len(names):
            raise _fail("combo", f"duplicate combo names in {names}")
        cfg = ExperimentConfig(
            seed=seed, replications=reps, budgets=budgets,
            objective=objective, combos=combos,
            output=_get(data, "config", "output", str, default="zoq-out"),
        )
        _validate_pairs(cfg)
        return cfg
    except ConfigurationError as exc:
        raise ConfigurationError(f"{source}: {exc}") from None


def _validate_pairs(cfg: ExperimentConfig) -> None:
    if not cfg.pairs():
        raise _fail("budgets", "no runnable (budget, combo) pair")
    for budget, combo in cfg.pairs():
        sched = combo.build_schedule(budget)
        qs = allocation_expand(sched, cfg.objective.dim)
        if combo.estimator is EstimatorKind.SINGLE and any(v != 1 for v in qs):
            raise _fail(f"combo {combo.name!r}",
                        "single estimator needs a single-query schedule")
        if combo.policy == "avg_optimal" and combo.estimator is EstimatorKind.ALIGN:
            raise _fail(f"combo {combo.name!r}", "avg_optimal pairs with avg/single")
        if combo.policy == "align_optimal" and combo.estimator is not EstimatorKind.ALIGN:
            raise _fail(f"combo {combo.name!r}", "align_optimal pairs with align")
        combo.build_estimator()


def load_config(path) -> ExperimentConfig:
    """Parse and validate a TOML config file.

    Syntax errors surface with the line and column reported by the TOML
    parser; semantic errors carry the offending key path.
    """
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"{path}: no such config file") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    return parse_config(data, source=str(path))


def build_objective(spec: ObjectiveSpec, seed: int) -> Objective:
    """Instantiate the objective for an experiment, deterministically in
    the experiment seed (generation uses a reserved stream id)."""
    rng = SeededRng(seed, OBJECTIVE_STREAM)
    if spec.kind == "quadratic":
        return make_quadratic(spec.dim, spec.eps, rng)
    if spec.kind == "logistic":
        m = spec.m if spec.m is not None else 10 * spec.dim
        return make_logistic(spec.dim, m, rng)
    if spec.kind == "rosenbrock":
        return make_rosenbrock(spec.dim)
    return make_stochastic_logistic(spec.dim, rng, batch_size=spec.batch_size,
                                    rho=spec.rho)
