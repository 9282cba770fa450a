import json
import math
import re
from pathlib import Path

import numpy as np
import pytest

from phasebandit.harness import (
    CellSummary,
    ConfigError,
    CsvParseError,
    ExperimentConfig,
    RegretSummary,
    RunRecord,
    emit_csv,
    emit_plot,
    format_csv,
    parse_csv,
    render_svg,
    run_experiment,
    sweep_and_fit,
)
from phasebandit.harness.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, main
from phasebandit.harness.output import HEADER, parse_csv_text
from phasebandit.harness.runner import resolve_workers, run_single

FIXTURES = Path(__file__).parent / "fixtures"


def stub_run(cfg, d, n, r, seed):
    """Deterministic fake policy with regret d * sqrt(n)."""
    return RunRecord(d * math.sqrt(n), 1.0 / math.sqrt(n), 10, True)


def cell(policy="full", d=5, n=100, **kw):
    base = dict(
        policy=policy, d=d, n=n, r=1.0, sigma=1.0, scale=1.0, seeds=3,
        mean_cum_regret=10.0, se_cum_regret=1.0, mean_simple_regret=0.1, se_simple_regret=0.01,
        mean_warm_rounds=5.0, warm_success_rate=1.0,
    )  # fmt: skip
    base.update(kw)
    return CellSummary(**base)


class TestConfig:
    def test_defaults_valid(self):
        ExperimentConfig()

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(policy="greedy"),
            dict(d_grid=[]),
            dict(n_grid=[]),
            dict(seeds=0),
            dict(r_mode="random"),
            dict(d_grid=[0]),
            dict(r=1.5),
            dict(mix_weight=0.7),
            dict(theta_mode="gaussian"),
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            ExperimentConfig(**kwargs)

    def test_unknown_field_rejected(self):
        with pytest.raises(ConfigError, match="colour"):
            ExperimentConfig.from_dict({"colour": "blue"})

    def test_fixed_r_object(self):
        cfg = ExperimentConfig.from_dict({"r_mode": {"fixed": 0.5}})
        assert cfg.r_mode == "fixed" and cfg.r == 0.5

    def test_load(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"policy": "uniform_pure", "d_grid": [2, 3], "seeds": 4}), encoding="utf-8")
        cfg = ExperimentConfig.load(p)
        assert cfg.policy == "uniform_pure" and cfg.d_grid == [2, 3] and cfg.seeds == 4

    def test_load_errors(self, tmp_path):
        with pytest.raises(ConfigError, match="missing.json"):
            ExperimentConfig.load(tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{nope", encoding="utf-8")
        with pytest.raises(ConfigError, match="bad.json"):
            ExperimentConfig.load(bad)

    def test_etc_scale_default(self):
        assert ExperimentConfig(constant_scale=0.3).etc_constant_scale == 0.3
        assert ExperimentConfig(constant_scale=0.3, etc_scale=0.1).etc_constant_scale == 0.1


class TestRunner:
    def test_uniform_pure_noiseless(self):
        cfg = ExperimentConfig(policy="uniform_pure", d_grid=[2], n_grid=[100], noise_sigma=0.0, seeds=3)
        s = run_experiment(cfg, workers=1)
        assert s.cell("uniform_pure", 2, 100).mean_simple_regret < 1e-3

    def test_single_seed_has_no_se(self):
        cfg = ExperimentConfig(policy="uniform_pure", d_grid=[2], n_grid=[50], seeds=1)
        c = run_experiment(cfg, workers=1).cells[0]
        assert c.se_cum_regret is None and c.se_simple_regret is None
        assert c.mean_warm_rounds is None and c.warm_success_rate is None

    def test_infeasible_cells_skipped(self, caplog):
        cfg = ExperimentConfig(policy="uniform_pure", d_grid=[8], n_grid=[8, 4096], r_mode="lower_bound_simple", seeds=1)
        with caplog.at_level("WARNING"):
            s = run_experiment(cfg, workers=1)
        assert [c.n for c in s.cells] == [4096]
        assert "skipping cell d=8 n=8" in caplog.text
        assert s.cells[0].r == pytest.approx(math.sqrt(math.sqrt(512 / (32 * 4096))))

    @pytest.mark.parametrize("policy", ["full", "warm_only", "etc_oracle_warm", "uniform_pure", "radius_probe"])
    def test_every_policy_respects_budget(self, policy):
        cfg = ExperimentConfig(policy=policy, d_grid=[3], n_grid=[3000], seeds=2, constant_scale=0.1, mix_weight=0.25)
        rec = run_single(cfg, 3, 3000, 1.0, 0)
        assert 0.0 <= rec.simple_regret <= 1.0 + 1e-12
        assert rec.cum_regret >= -1e-9

    def test_theta_streams_shared_across_policies(self):
        # simple regret of the oracle warm action itself is zero, so a shared
        # theta* shows up as zero regret in the degenerate (tiny budget) branch
        cfg = ExperimentConfig(policy="etc_oracle_warm", d_grid=[4], n_grid=[10], seeds=1)
        assert run_single(cfg, 4, 10, 1.0, 0).cum_regret == pytest.approx(0.0, abs=1e-12)

    def test_oracle_warm_dominates_full(self):
        common = dict(d_grid=[5], n_grid=[8192], seeds=10, constant_scale=0.2, mix_weight=0.25, base_seed=3)
        full = run_experiment(ExperimentConfig(policy="full", **common), workers=1).cells[0]
        oracle = run_experiment(ExperimentConfig(policy="etc_oracle_warm", **common), workers=1).cells[0]
        assert oracle.mean_cum_regret <= full.mean_cum_regret

    def test_fixed_theta_mode(self):
        cfg = ExperimentConfig(policy="uniform_pure", d_grid=[3], n_grid=[200], seeds=2, theta_mode="fixed")
        a, b = run_single(cfg, 3, 200, 1.0, 0), run_single(cfg, 3, 200, 1.0, 1)
        assert a != b  # same theta*, different noise and design

    def test_parallel_equals_sequential(self):
        cfg = ExperimentConfig(policy="full", d_grid=[3, 4], n_grid=[1500], seeds=3, constant_scale=0.1, mix_weight=0.25)
        assert format_csv(run_experiment(cfg, workers=1)) == format_csv(run_experiment(cfg, workers=2))

    def test_workers_env(self, monkeypatch):
        monkeypatch.setenv("PHASE_BANDIT_WORKERS", "3")
        assert resolve_workers(None) == 3
        assert resolve_workers(2) == 2
        monkeypatch.setenv("PHASE_BANDIT_WORKERS", "many")
        with pytest.raises(ValueError):
            resolve_workers(None)


class TestSweep:
    def test_stub_slopes(self):
        cfg = ExperimentConfig(d_grid=[4], n_grid=[100, 400, 1600, 6400], seeds=2)
        fit, _ = sweep_and_fit(cfg, "n", workers=1, run_fn=stub_run)
        assert fit.slope == pytest.approx(0.5, abs=1e-12)
        cfg = ExperimentConfig(d_grid=[2, 4, 8, 16], n_grid=[100], seeds=2)
        fit, _ = sweep_and_fit(cfg, "d", workers=1, run_fn=stub_run)
        assert fit.slope == pytest.approx(1.0, abs=1e-12)

    def test_stub_in_pool(self):
        cfg = ExperimentConfig(d_grid=[4], n_grid=[100, 400, 1600], seeds=2)
        fit, _ = sweep_and_fit(cfg, "n", metric="simple_regret", workers=2, run_fn=stub_run)
        assert fit.slope == pytest.approx(-0.5, abs=1e-12)

    def test_needs_three_points(self):
        with pytest.raises(ValueError):
            sweep_and_fit(ExperimentConfig(d_grid=[4], n_grid=[100, 200]), "n", run_fn=stub_run)
        with pytest.raises(ValueError):
            sweep_and_fit(ExperimentConfig(d_grid=[4, 5], n_grid=[1, 2, 3]), "n", run_fn=stub_run)

    def test_uniform_simple_regret_slope_fixed_radius(self):
        # regret is second order in the 1/sqrt(n) parameter error
        cfg = ExperimentConfig(policy="uniform_pure", d_grid=[3], n_grid=[500, 2000, 8000], seeds=20, r=1.0)
        fit, _ = sweep_and_fit(cfg, "n", metric="simple_regret", workers=1)
        assert -1.25 <= fit.slope <= -0.75

    def test_uniform_simple_regret_slope_hard_radius(self):
        # with r^2 ~ n^{-1/2} the relative regret is flat, leaving the 1/sqrt(n) of r^2
        cfg = ExperimentConfig(
            policy="uniform_pure", d_grid=[3], n_grid=[500, 2000, 8000], seeds=40, r_mode="lower_bound_simple"
        )
        fit, _ = sweep_and_fit(cfg, "n", metric="simple_regret", workers=1)
        assert -0.75 <= fit.slope <= -0.25


class TestCsv:
    def test_golden(self, tmp_path):
        golden = (FIXTURES / "golden_summary.csv").read_bytes()
        summary = parse_csv(FIXTURES / "golden_summary.csv")
        out = tmp_path / "out.csv"
        emit_csv(summary, out)
        assert out.read_bytes() == golden

    def test_header(self):
        assert ",".join(HEADER) == (
            "policy,d,n,r,sigma,scale,seeds,mean_cum_regret,se_cum_regret,mean_simple_regret,"
            "se_simple_regret,mean_warm_rounds,warm_success_rate"
        )

    def test_empty(self, tmp_path):
        p = tmp_path / "e.csv"
        emit_csv(RegretSummary([]), p)
        assert p.read_text().splitlines() == [",".join(HEADER)]

    def test_one_cell_two_lines_lf(self, tmp_path):
        p = tmp_path / "one.csv"
        emit_csv(RegretSummary([cell()]), p)
        raw = p.read_bytes()
        assert b"\r" not in raw and raw.count(b"\n") == 2

    def test_sorted_rows(self):
        text = format_csv(RegretSummary([cell("warm_only", 3, 10), cell("full", 5, 10), cell("full", 2, 99)]))
        keys = [tuple(line.split(",")[:3]) for line in text.splitlines()[1:]]
        assert keys == [("full", "2", "99"), ("full", "5", "10"), ("warm_only", "3", "10")]

    def test_round_trip_exact(self):
        rng = np.random.default_rng(0)
        cells = [
            cell("p%d" % i, int(rng.integers(1, 50)), int(rng.integers(1, 10**6)), mean_cum_regret=float(rng.random() * 1e4),
                 se_cum_regret=None if i % 2 else float(rng.random()), mean_simple_regret=float(rng.random()) / 3)
            for i in range(8)
        ]  # fmt: skip
        s = RegretSummary(cells)
        assert parse_csv_text(format_csv(s)).cells == s.cells

    def test_unwritable_path(self, tmp_path):
        bad = tmp_path / "no" / "such" / "dir" / "x.csv"
        with pytest.raises(OSError, match=re.escape(str(bad))):
            emit_csv(RegretSummary([]), bad)

    def test_parse_error_names_line(self):
        text = ",".join(HEADER) + "\nfull,5,10,1.0,1.0,1.0,3,1,1,1,1,1,1\nfull,five,10,1,1,1,3,1,1,1,1,1,1\n"
        with pytest.raises(CsvParseError, match="line 3"):
            parse_csv_text(text)
        with pytest.raises(CsvParseError, match="line 2"):
            parse_csv_text(",".join(HEADER) + "\nfull,5\n")

    def test_determinism_end_to_end(self, tmp_path):
        cfg = ExperimentConfig(policy="full", d_grid=[4], n_grid=[2048], seeds=2, constant_scale=0.2, base_seed=5)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        emit_csv(run_experiment(cfg, workers=1), a)
        emit_csv(run_experiment(cfg, workers=1), b)
        assert a.read_bytes() == b.read_bytes()


class TestPlot:
    def test_header_only(self, tmp_path):
        p = tmp_path / "e.csv"
        emit_csv(RegretSummary([]), p)
        svg = render_svg(parse_csv(p))
        assert svg.startswith("<svg") and 'id="axes"' in svg and 'id="legend"' in svg
        assert "<polyline" not in svg

    def test_three_policies(self, tmp_path):
        cells = [cell(pol, 5, n, mean_cum_regret=float(n) ** 0.5 * (i + 1)) for i, pol in enumerate(["a", "b", "c"]) for n in (10, 100, 1000)]
        p, out = tmp_path / "s.csv", tmp_path / "s.svg"
        emit_csv(RegretSummary(cells), p)
        emit_plot(p, "n", out, log_log=True)
        svg = out.read_text()
        assert svg.count("<polyline") == 3
        assert re.findall(r'class="legend-entry"[^>]*>([^<]+)<', svg) == ["a", "b", "c"]
        assert svg.count('class="errorbar"') == 9

    def test_deterministic_bytes(self, tmp_path):
        p = FIXTURES / "golden_summary.csv"
        a, b = tmp_path / "a.svg", tmp_path / "b.svg"
        emit_plot(p, "n", a)
        emit_plot(p, "n", b)
        assert a.read_bytes() == b.read_bytes()

    def test_malformed_csv(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text(",".join(HEADER) + "\nfull,5,10\n")
        with pytest.raises(CsvParseError, match="line 2"):
            emit_plot(p, "n", tmp_path / "x.svg")


class TestCli:
    def test_simulate_and_plot(self, tmp_path, capsys):
        out = tmp_path / "r.csv"
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"policy": "uniform_pure", "d_grid": [2], "n_grid": [100], "seeds": 2}))
        assert main(["simulate", "--config", str(cfg), "--seeds", "3", "--output-path", str(out), "--workers", "1"]) == EXIT_OK
        assert parse_csv(out).cells[0].seeds == 3  # flag overrides file
        svg = tmp_path / "r.svg"
        assert main(["plot", "--csv", str(out), "--out", str(svg), "--log-log"]) == EXIT_OK
        assert svg.read_text().startswith("<svg")

    def test_sweep(self, tmp_path, capsys):
        out = tmp_path / "s.csv"
        code = main(["sweep", "--axis", "n", "--policy", "uniform_pure", "--d-grid", "2", "--n-grid", "50,100,200",
                     "--seeds", "2", "--output-path", str(out), "--workers", "1"])  # fmt: skip
        assert code == EXIT_OK
        assert "slope=" in capsys.readouterr().out

    def test_config_errors(self, tmp_path, capsys):
        assert main(["simulate", "--policy", "greedy"]) == EXIT_CONFIG
        assert main(["simulate", "--no-such-flag"]) == EXIT_CONFIG
        assert main(["sweep", "--axis", "n", "--n-grid", "1,2"]) == EXIT_CONFIG
        assert main(["simulate", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG

    def test_runtime_error(self, tmp_path):
        out = tmp_path / "no" / "dir" / "x.csv"
        code = main(["simulate", "--policy", "uniform_pure", "--d-grid", "2", "--n-grid", "20", "--seeds", "1",
                     "--output-path", str(out), "--workers", "1"])  # fmt: skip
        assert code == 2

    def test_moments(self, capsys):
        assert main(["moments", "--d", "2", "--r", "1.0"]) == EXIT_OK
        line = capsys.readouterr().out.splitlines()[1].split(",")
        assert float(line[3]) == 0.375 and float(line[5]) == 0.0625

    def test_check(self, capsys):
        assert main(["check", "--only", "information", "curvature"]) == EXIT_OK
        assert "PASS information" in capsys.readouterr().out

    def test_check_failure_exit_code(self, monkeypatch):
        from phasebandit.harness import checks

        monkeypatch.setitem(checks.CHECKS, "information", lambda seed: checks.CheckResult("information", False, "forced"))
        assert main(["check", "--only", "information"]) == EXIT_CHECK
