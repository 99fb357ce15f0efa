"""Sweep execution and CSV output.

Stream layout: replication ``rep`` of combo ``ci`` under budget index
``bi`` owns the stream id ``((bi * n_combos + ci) * R + rep) * 8``; inside
a run, offset 0 drives direction sampling, offset 1 mini-batch keys, and
offset 2 the initial point.  Objective generation sits on its own reserved
stream, so replications can run in any order (or in parallel) without
changing any output.

CSV conventions: comma separators, UTF-8, one header row, floats with 17
significant digits.  The per-combo trajectory schema is
``replication,t,q_t,cum_queries,eta_t,f_value,gap,grad_norm2``; diverged
replications keep their rows up to the last finite iterate, so a truncated
replication in the file is the record of the failure.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import SeededRng
from ..errors import DivergenceError
from ..objectives import default_start
from ..optimizer import Trajectory, run_deterministic, run_stochastic
from .config import ComboSpec, ExperimentConfig, build_objective

__all__ = ["TRAJECTORY_HEADER", "SUMMARY_HEADER", "FINAL_HEADER",
           "RunResult", "run_experiment", "write_csv", "format_value"]

TRAJECTORY_HEADER = ["replication", "t", "q_t", "cum_queries", "eta_t",
                     "f_value", "gap", "grad_norm2"]
SUMMARY_HEADER = ["combo", "budget", "t", "q_t", "cum_queries",
                  "cum_raw_evals", "eta_t", "mean_f", "sem_f", "mean_gap",
                  "sem_gap", "mean_grad_norm2", "n_reps"]
FINAL_HEADER = ["combo", "budget", "replication", "f_final", "f_weighted"]

_STREAMS_PER_REP = 8
_X0_OFFSET = 2


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_value(v) for v in row) + "\n")


@dataclass
class ComboOutcome:
    combo: ComboSpec
    budget: int
    trajectories: list[Trajectory]
    failed: list[int]                 # replication indices that diverged
    path: Path


@dataclass
class RunResult:
    out_dir: Path
    outcomes: list[ComboOutcome] = field(default_factory=list)
    summary_path: Path | None = None
    final_path: Path | None = None

    @property
    def all_failed(self) -> bool:
        return any(not oc.trajectories for oc in self.outcomes)


def _rep_stream(bi: int, ci: int, rep: int, n_combos: int, reps: int) -> int:
    return ((bi * n_combos + ci) * reps + rep) * _STREAMS_PER_REP


def _traj_rows(rep: int, traj: Trajectory):
    for i in range(traj.iterations):
        yield [rep, int(traj.t[i]), int(traj.q[i]), int(traj.cum_queries[i]),
               traj.eta[i], traj.f[i], traj.gap[i], traj.grad_norm2[i]]


def _summary_rows(name: str, budget: int, trajs: list[Trajectory]):
    """Pointwise means across completed replications.

    Completed replications of one combo share the allocation, hence the
    cumulative-query grid, so curves align exactly; the mean at a grid
    point is the piecewise-constant-interpolation mean at that query count.
    """
    n = len(trajs)
    f = np.stack([tr.f for tr in trajs])
    gap = np.stack([tr.gap for tr in trajs])
    gn2 = np.stack([tr.grad_norm2 for tr in trajs])
    ref = trajs[0]
    sem = (lambda a: a.std(axis=0, ddof=1) / np.sqrt(n)) if n > 1 else \
        (lambda a: np.full(a.shape[1], np.nan))
    sem_f, sem_gap = sem(f), sem(gap)
    mean_f, mean_gap = f.mean(axis=0), gap.mean(axis=0)
    mean_gn2 = gn2.mean(axis=0)
    for i in range(ref.iterations):
        raw = int(ref.cum_queries[i]) + i + 1
        yield [name, budget, int(ref.t[i]), int(ref.q[i]),
               int(ref.cum_queries[i]), raw, ref.eta[i], mean_f[i], sem_f[i],
               mean_gap[i], sem_gap[i], mean_gn2[i], n]


def run_experiment(cfg: ExperimentConfig, out_dir=None,
                   seed: int | None = None, echo=None) -> RunResult:
    """Run every (budget, combo) pair of an experiment and write CSVs.

    ``seed`` overrides the config seed (the ZOQ_SEED hook).  Writes one
    trajectory CSV per pair, a pointwise-mean ``summary.csv``, and for
    stochastic objectives a ``final.csv`` with last-iterate and
    weighted-average objective values per replication.
    """
    echo = echo or (lambda msg: print(msg, file=sys.stderr))
    seed = cfg.seed if seed is None else int(seed)
    out_dir = Path(out_dir if out_dir is not None else cfg.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    obj = build_objective(cfg.objective, seed)
    result = RunResult(out_dir=out_dir)
    summary_rows = []
    final_rows = []
    n_combos = len(cfg.combos)

    for bi, budget in enumerate(cfg.budgets):
        for ci, combo in enumerate(cfg.combos):
            if combo.budgets is not None and budget not in combo.budgets:
                continue
            sched = combo.build_schedule(budget)
            policy = combo.build_policy(obj.L)
            est_cfg = combo.build_estimator()
            trajs: list[Trajectory] = []
            rows = []
            failed: list[int] = []
            for rep in range(cfg.replications):
                rng = SeededRng(seed, _rep_stream(bi, ci, rep, n_combos,
                                                  cfg.replications))
                x0 = default_start(obj, rng.derive(_X0_OFFSET))
                try:
                    if cfg.objective.stochastic:
                        traj = run_stochastic(obj, est_cfg, sched, policy, x0, rng)
                    else:
                        traj = run_deterministic(obj, est_cfg, sched, policy, x0, rng)
                except DivergenceError as exc:
                    failed.append(rep)
                    echo(f"combo {combo.name} K={budget} replication {rep} "
                         f"diverged: {exc}")
                    partial = getattr(exc, "partial", None)
                    if partial is not None:
                        rows.extend(_traj_rows(rep, partial))
                    continue
                trajs.append(traj)
                rows.extend(_traj_rows(rep, traj))
                if traj.f_weighted is not None:
                    final_rows.append([combo.name, budget, rep, traj.f[-1],
                                       traj.f_weighted])
            path = out_dir / f"{combo.name}_K{budget}.csv"
            write_csv(path, TRAJECTORY_HEADER, rows)
            result.outcomes.append(ComboOutcome(combo, budget, trajs, failed, path))
            if trajs:
                summary_rows.extend(_summary_rows(combo.name, budget, trajs))

    result.summary_path = out_dir / "summary.csv"
    write_csv(result.summary_path, SUMMARY_HEADER, summary_rows)
    if final_rows:
        result.final_path = out_dir / "final.csv"
        write_csv(result.final_path, FINAL_HEADER, final_rows)
    return result
