import os
from pathlib import Path

import numpy as np
import pytest

from zoq.bench import runner as runner_mod
from zoq.bench.cli import main
from zoq.bench.config import load_config, parse_config
from zoq.bench.plot import plot_summaries, read_summary
from zoq.bench.presets import preset_config, preset_names
from zoq.bench.runner import (
    FINAL_HEADER,
    SUMMARY_HEADER,
    TRAJECTORY_HEADER,
    run_experiment,
)
from zoq.errors import ConfigurationError, DivergenceError

MINI_CONFIG = """\
seed = 11
replications = 2
budgets = [25]

[objective]
kind = "quadratic"
dim = 5
eps = 1.0

[[combo]]
estimator = "align"
q = 5

[[combo]]
estimator = "avg"
q = 1
"""


@pytest.fixture
def mini_config(tmp_path):
    path = tmp_path / "mini.toml"
    path.write_text(MINI_CONFIG)
    return path


def read_bytes_tree(root):
    return {p.name: p.read_bytes() for p in sorted(Path(root).glob("*.csv"))}


class TestConfig:
    def test_loads_and_validates(self, mini_config):
        cfg = load_config(mini_config)
        assert cfg.seed == 11 and cfg.budgets == (25,)
        assert [c.name for c in cfg.combos] == ["align-q5", "avg-q1"]
        assert cfg.combos[0].schedule == "full"
        assert cfg.combos[0].policy == "align_optimal"
        assert cfg.combos[1].policy == "avg_optimal"

    def test_syntax_error_carries_position(self, tmp_path):
        path = tmp_path / "broken.toml"
        path.write_text("seed = [unclosed\n")
        with pytest.raises(ConfigurationError) as exc:
            load_config(path)
        assert "line" in str(exc.value)

    def test_semantic_error_names_key(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text(MINI_CONFIG.replace('q = 5', 'q = 9'))
        with pytest.raises(ConfigurationError) as exc:
            load_config(path)
        assert "q=9" in str(exc.value) or "q" in str(exc.value)

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_config(tmp_path / "nope.toml")

    def test_infeasible_pair_rejected_up_front(self):
        data = {
            "seed": 1, "replications": 1, "budgets": [3],
            "objective": {"kind": "quadratic", "dim": 5},
            "combo": [{"estimator": "align", "q": 5}],
        }
        with pytest.raises(ConfigurationError):
            parse_config(data)

    def test_stochastic_requires_diminishing(self):
        data = {
            "seed": 1, "replications": 1, "budgets": [10],
            "objective": {"kind": "stochastic_logistic", "dim": 4},
            "combo": [{"estimator": "avg", "q": 1, "policy": "avg_optimal"}],
        }
        with pytest.raises(ConfigurationError) as exc:
            parse_config(data)
        assert "diminishing" in str(exc.value)


class TestRunner:
    def test_outputs_and_byte_identity(self, mini_config, tmp_path):
        cfg = load_config(mini_config)
        a = run_experiment(cfg, tmp_path / "a")
        b = run_experiment(cfg, tmp_path / "b")
        files_a = read_bytes_tree(tmp_path / "a")
        files_b = read_bytes_tree(tmp_path / "b")
        assert set(files_a) == {"align-q5_K25.csv", "avg-q1_K25.csv",
                                "summary.csv"}
        assert files_a == files_b
        assert not a.all_failed and a.summary_path.exists()
        assert b.final_path is None  # deterministic runs carry no final.csv

    def test_trajectory_header_golden(self, mini_config, tmp_path):
        run_experiment(load_config(mini_config), tmp_path / "out")
        first = (tmp_path / "out" / "align-q5_K25.csv").read_text().splitlines()[0]
        assert first == ",".join(TRAJECTORY_HEADER)
        assert first == "replication,t,q_t,cum_queries,eta_t,f_value,gap,grad_norm2"
        summary_first = (tmp_path / "out" / "summary.csv").read_text().splitlines()[0]
        assert summary_first == ",".join(SUMMARY_HEADER)

    def test_float_format_17_digits(self, mini_config, tmp_path):
        run_experiment(load_config(mini_config), tmp_path / "out")
        line = (tmp_path / "out" / "align-q5_K25.csv").read_text().splitlines()[1]
        eta = line.split(",")[4]
        # round-trips exactly at 17 significant digits
        assert format(float(eta), ".17g") == eta

    def test_seed_override_changes_output(self, mini_config, tmp_path):
        cfg = load_config(mini_config)
        run_experiment(cfg, tmp_path / "a")
        run_experiment(cfg, tmp_path / "b", seed=99)
        assert (read_bytes_tree(tmp_path / "a")["align-q5_K25.csv"]
                != read_bytes_tree(tmp_path / "b")["align-q5_K25.csv"])

    def test_budget_accounting(self, mini_config, tmp_path):
        run_experiment(load_config(mini_config), tmp_path / "out")
        for name in ("align-q5_K25.csv", "avg-q1_K25.csv"):
            rows = (tmp_path / "out" / name).read_text().splitlines()[1:]
            cum = [int(r.split(",")[3]) for r in rows]
            q = [int(r.split(",")[2]) for r in rows]
            assert max(cum) <= 25
            assert max(cum) >= 25 - max(q) + 1

    def test_stochastic_run_writes_final(self, tmp_path):
        data = {
            "seed": 5, "replications": 2, "budgets": [20],
            "objective": {"kind": "stochastic_logistic", "dim": 4,
                          "batch_size": 3},
            "combo": [{"estimator": "align", "q": 4}],
        }
        cfg = parse_config(data)
        res = run_experiment(cfg, tmp_path / "out")
        assert res.final_path is not None
        first = res.final_path.read_text().splitlines()[0]
        assert first == ",".join(FINAL_HEADER)

    def test_divergent_replication_recorded(self, mini_config, tmp_path,
                                            monkeypatch):
        cfg = load_config(mini_config)

        real = runner_mod.run_deterministic
        calls = {"n": 0}

        def flaky(obj, est_cfg, sched, policy, x0, rng):
            calls["n"] += 1
            traj = real(obj, est_cfg, sched, policy, x0, rng)
            if calls["n"] == 1:
                err = DivergenceError("boom", x_last=x0, t=2)
                err.partial = traj
                raise err
            return traj

        monkeypatch.setattr(runner_mod, "run_deterministic", flaky)
        res = run_experiment(cfg, tmp_path / "out")
        assert res.outcomes[0].failed == [0]
        assert len(res.outcomes[0].trajectories) == 1
        assert not res.all_failed


class TestPlot:
    def test_single_combo_single_polyline(self, mini_config, tmp_path):
        data = {
            "seed": 3, "replications": 2, "budgets": [20],
            "objective": {"kind": "quadratic", "dim": 4},
            "combo": [{"estimator": "align", "q": 4}],
        }
        res = run_experiment(parse_config(data), tmp_path / "out")
        written = plot_summaries([res.summary_path], tmp_path / "svg")
        assert [p.name for p in written] == ["figure_K20.svg"]
        svg = written[0].read_text()
        assert svg.count("<polyline") == 1
        assert "align-q4" in svg  # legend entry
        assert "queries used" in svg

    def test_multi_combo_shared_budget_axis(self, mini_config, tmp_path):
        res = run_experiment(load_config(mini_config), tmp_path / "out")
        written = plot_summaries([res.summary_path], tmp_path / "svg")
        svg = written[0].read_text()
        assert svg.count("<polyline") == 2
        # both polylines end at the budget's pixel column
        ends = [pts.split()[-1].split(",")[0]
                for pts in _polyline_points(svg)]
        assert len(set(ends)) == 1

    def test_mismatched_axes_named(self, tmp_path):
        a = _write_summary(tmp_path / "a.csv", budget=10)
        b = _write_summary(tmp_path / "b.csv", budget=20)
        with pytest.raises(ConfigurationError) as exc:
            plot_summaries([a, b], tmp_path / "svg")
        assert "a.csv" in str(exc.value) and "b.csv" in str(exc.value)

    def test_read_summary_groups_by_budget(self, tmp_path):
        path = _write_summary(tmp_path / "s.csv", budget=10)
        groups = read_summary(path)
        assert list(groups) == [10]
        assert groups[10][0].label == "combo-a"


def _polyline_points(svg):
    import re

    return re.findall(r'<polyline points="([^"]+)"', svg)


def _write_summary(path, budget):
    header = ",".join(SUMMARY_HEADER)
    rows = [
        f"combo-a,{budget},0,1,{budget // 2},{budget // 2 + 1},0.1,2.0,0.1,1.0,0.1,1.0,2",
        f"combo-a,{budget},1,1,{budget},{budget + 2},0.1,1.0,0.1,0.5,0.1,0.5,2",
    ]
    Path(path).write_text(header + "\n" + "\n".join(rows) + "\n")
    return Path(path)


class TestCli:
    def test_run_and_exit_codes(self, mini_config, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["run", str(mini_config), "-o", str(out)]) == 0
        assert (out / "summary.csv").exists()

    def test_bad_config_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text("not toml ][")
        assert main(["run", str(bad)]) == 2

    def test_missing_plot_args_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["plot"])
        assert exc.value.code == 2

    def test_plot_command(self, mini_config, tmp_path):
        out = tmp_path / "out"
        main(["run", str(mini_config), "-o", str(out)])
        assert main(["plot", str(out / "summary.csv"), "-o",
                     str(tmp_path / "svg")]) == 0
        assert (tmp_path / "svg" / "figure_K25.svg").exists()

    def test_verify_quick(self, capsys):
        assert main(["verify", "--quick"]) == 0
        out = capsys.readouterr().out
        assert "checks passed" in out

    def test_verify_negative_control(self, capsys):
        assert main(["verify", "--quick", "--self-test-fail"]) == 1

    def test_presets_list(self, capsys):
        assert main(["presets", "list"]) == 0
        out = capsys.readouterr().out
        for name in ("fig1", "fig2", "fig3", "fig4", "constrained"):
            assert name in out

    def test_zoq_seed_env_override(self, mini_config, tmp_path, monkeypatch):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        monkeypatch.delenv("ZOQ_SEED", raising=False)
        main(["run", str(mini_config), "-o", str(out_a)])
        monkeypatch.setenv("ZOQ_SEED", "4242")
        main(["run", str(mini_config), "-o", str(out_b)])
        assert (read_bytes_tree(out_a)["avg-q1_K25.csv"]
                != read_bytes_tree(out_b)["avg-q1_K25.csv"])

    def test_bad_zoq_seed_exits_2(self, mini_config, monkeypatch):
        monkeypatch.setenv("ZOQ_SEED", "not-an-int")
        assert main(["run", str(mini_config)]) == 2


class TestPresets:
    def test_all_presets_validate(self):
        for name in preset_names():
            cfg = preset_config(name)
            assert cfg.pairs()

    def test_paper_scale_dimensions(self):
        cfg = preset_config("fig1", paper_scale=True)
        assert cfg.objective.dim == 1000
        assert cfg.budgets == (20000, 500)
        # full-subspace combos are filtered away from the K < d budget
        for budget, combo in cfg.pairs():
            if combo.q == 1000:
                assert budget >= 1000

    def test_constrained_preset_is_budget_starved(self):
        cfg = preset_config("constrained")
        assert cfg.objective.dim > max(cfg.budgets)
        assert any(c.q == max(cfg.budgets) for c in cfg.combos)
