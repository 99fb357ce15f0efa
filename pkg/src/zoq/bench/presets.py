"""Named experiment presets.

``fig1`` .. ``fig4`` cover the four benchmark settings (strongly convex
quadratic, convex logistic, non-convex Rosenbrock, stochastic logistic) at
desk scale; ``constrained`` is the budget-starved regime where the total
budget is below the dimension, so a full-subspace block is unaffordable
and the largest feasible block size competes instead.  ``--paper-scale``
switches the first four to d = 1000 with budgets 20000 and 500.
"""

from __future__ import annotations

from .config import ExperimentConfig, parse_config

__all__ = ["PRESETS", "preset_names", "preset_config"]


def _combo(estimator: str, q: int, **extra) -> dict:
    return {"estimator": estimator, "q": q, **extra}


def _figure(kind: str, dim: int, budgets, extra_obj=None, combos=None,
            replications: int = 10, seed: int = 20240803) -> dict:
    objective = {"kind": kind, "dim": dim}
    if extra_obj:
        objective.update(extra_obj)
    return {
        "seed": seed,
        "replications": replications,
        "budgets": list(budgets),
        "objective": objective,
        "combo": combos,
    }


def _dichotomy_combos(dim: int, q_mid: int, budgets=None) -> list[dict]:
    out = []
    for est in ("avg", "align"):
        for q in (1, q_mid, dim):
            c = _combo(est, q)
            # the full-subspace block only fits under budgets >= dim
            if q == dim and budgets is not None:
                c["budgets"] = [b for b in budgets if b >= dim]
            out.append(c)
    return out


def _desk(kind: str, extra_obj=None) -> dict:
    return _figure(kind, 100, [2000, 500], extra_obj,
                   _dichotomy_combos(100, 10))


def _paper(kind: str, extra_obj=None) -> dict:
    budgets = [20000, 500]
    return _figure(kind, 1000, budgets, extra_obj,
                   _dichotomy_combos(1000, 100, budgets))


def _fig4(dim: int, budgets) -> dict:
    combos = []
    for est in ("avg", "align"):
        for q in (1, dim):
            c = _combo(est, q)
            if q == dim:
                c["budgets"] = [b for b in budgets if b >= dim]
            combos.append(c)
    return _figure("stochastic_logistic", dim, budgets,
                   {"batch_size": 10, "rho": 0.1}, combos)


def _constrained() -> dict:
    # budget below the dimension: full-subspace estimation is impossible
    combos = [_combo("avg", 1), _combo("avg", 100),
              _combo("align", 1), _combo("align", 100), _combo("align", 500)]
    return _figure("quadratic", 600, [500], None, combos)


PRESETS = {
    "fig1": {"desk": lambda: _desk("quadratic"),
             "paper": lambda: _paper("quadratic")},
    "fig2": {"desk": lambda: _desk("logistic"),
             "paper": lambda: _paper("logistic")},
    "fig3": {"desk": lambda: _desk("rosenbrock"),
             "paper": lambda: _paper("rosenbrock")},
    "fig4": {"desk": lambda: _fig4(50, [5000, 500]),
             "paper": lambda: _fig4(1000, [20000, 500])},
    "constrained": {"desk": _constrained, "paper": _constrained},
}


def preset_names() -> list[str]:
    return list(PRESETS)


def preset_config(name: str, paper_scale: bool = False) -> ExperimentConfig:
    if name not in PRESETS:
        raise KeyError(name)
    scale = "paper" if paper_scale else "desk"
    data = PRESETS[name][scale]()
    data.setdefault("output", f"zoq-out/{name}" + ("-paper" if paper_scale else ""))
    return parse_config(data, source=f"preset {name!r}")
