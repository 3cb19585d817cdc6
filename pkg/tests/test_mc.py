"""Tests for the replication harness and its aggregation."""

import dataclasses
import math

import numpy as np
import pytest

from ridgeiv import (
    ConfigError,
    EstimationError,
    MCSummary,
    RepRecord,
    SimConfig,
    panel_csv,
    panel_text,
    run_panel,
    run_records,
    run_replication,
    summarize,
)


def config(**overrides):
    base = dict(
        n=80,
        p_x=10,
        p_z1=8,
        corr="EC",
        rho=0.04,
        gamma_x_pattern="nonsparse_dense",
        gamma_z_pattern="cutoff",
        density_x=0.2,
        density_z=0.7,
        seed=17,
        n_reps=6,
    )
    base.update(overrides)
    return SimConfig(**base)


def record(rep=0, alpha=1.0, var=0.04, n=80, covered=True, estimator="TSRR", err=None):
    half = 1.959964 * math.sqrt(var)
    return RepRecord(
        rep=rep,
        alpha_hat=alpha,
        sigma_alpha2=var * n,
        ci_low=alpha - half,
        ci_high=alpha + half,
        covered=covered,
        elapsed_s=0.01,
        estimator=estimator,
        n1=n // 2,
        n2=n - n // 2,
        error=err,
    )


class TestRunReplication:
    def test_deterministic_apart_from_timing(self):
        cfg = config()
        a = run_replication(cfg, "TSRR", 2)
        b = run_replication(cfg, "TSRR", 2)
        assert dataclasses.replace(a, elapsed_s=0.0) == dataclasses.replace(b, elapsed_s=0.0)

    def test_noiseless_recovers_truth(self):
        cfg = config(noise_scale=0.0, density_x=0.0, m=0.0)
        rec = run_replication(cfg, "TSRR", 0)
        assert rec.alpha_hat == pytest.approx(cfg.alpha_true, abs=1e-6)

    def test_rep_bounds(self):
        cfg = config(n_reps=3)
        with pytest.raises(ConfigError, match=r"\[0, 3\)"):
            run_replication(cfg, "TSRR", 3)

    def test_unknown_estimator(self):
        with pytest.raises(ConfigError, match="unknown estimator"):
            run_replication(config(), "OLS", 0)

    def test_rjive_runs(self):
        rec = run_replication(config(), "RJIVE", 1)
        assert not rec.failed and rec.n1 == 0 and rec.n2 == 80

    def test_failure_captured_not_raised(self):
        # degenerate design: no instrument signal and no noise leaves d = 0
        cfg = config(density_z=0.0, noise_scale=0.0, p_x=0, density_x=0.0, m=0.0)
        rec = run_replication(cfg, "TSRR", 0)
        assert rec.failed and "identification" in rec.error
        assert math.isnan(rec.alpha_hat) and not rec.covered


class TestSummarize:
    def test_bias_and_mse_arithmetic(self):
        records = [record(rep=0, alpha=1.1), record(rep=1, alpha=0.9)]
        s = summarize(records, 1.0)
        assert s.bias == pytest.approx(0.0, abs=1e-15)
        assert s.mse == pytest.approx(0.01, abs=1e-15)

    def test_coverage_counting(self):
        records = [
            dataclasses.replace(record(rep=0), ci_low=0.5, ci_high=1.5, covered=True),
            dataclasses.replace(record(rep=1), ci_low=1.2, ci_high=1.4, covered=False),
        ]
        s = summarize(records, 1.0)
        assert s.p_cover == 0.5

    def test_bias_var_zero_when_estimates_match_spread(self):
        # per-rep estimated variance identically equal to across-rep variance
        alphas = [0.8, 1.2, 1.0, 1.0]
        spread = float(np.var(alphas))
        records = [record(rep=i, alpha=a, var=spread) for i, a in enumerate(alphas)]
        s = summarize(records, 1.0)
        assert s.bias_var == pytest.approx(0.0, abs=1e-12)

    def test_mse_identity(self):
        rng = np.random.default_rng(3)
        alphas = rng.normal(1.0, 0.3, size=9)
        records = [record(rep=i, alpha=float(a)) for i, a in enumerate(alphas)]
        s = summarize(records, 1.0)
        assert s.mse == pytest.approx(np.var(alphas) + s.bias**2, rel=1e-12)

    def test_failed_records_excluded(self):
        records = [record(rep=0, alpha=1.0), record(rep=1, alpha=math.nan, err="boom")]
        s = summarize(records, 1.0)
        assert s.n_reps_used == 1 and s.n_failed == 1
        assert math.isfinite(s.bias)

    def test_empty_rejected(self):
        with pytest.raises(EstimationError, match="no successful"):
            summarize([record(rep=0, alpha=math.nan, err="x")], 1.0)


class TestRunPanel:
    def test_two_estimator_rows(self):
        cfg = config(n_reps=4)
        summaries = run_panel(cfg, ("TSRR", "RJIVE"), threads=1)
        assert set(summaries) == {"TSRR", "RJIVE"}
        for s in summaries.values():
            assert isinstance(s, MCSummary) and s.n_reps_used == 4

    def test_parallel_matches_serial(self):
        cfg = config(n_reps=6)
        serial = run_panel(cfg, ("TSRR",), threads=1)["TSRR"]
        parallel = run_panel(cfg, ("TSRR",), threads=3)["TSRR"]
        for field in ("bias", "bias_var", "mse", "p_cover", "length"):
            assert getattr(serial, field) == getattr(parallel, field)

    def test_records_in_rep_order(self):
        cfg = config(n_reps=5)
        records = run_records(cfg, "TSRR", threads=2)
        assert [rec.rep for rec in records] == list(range(5))

    def test_coverage_recomputable_from_endpoints(self):
        cfg = config(n_reps=6)
        records = run_records(cfg, "TSRR", threads=1)
        s = summarize(records, cfg.alpha_true)
        recount = np.mean(
            [rec.ci_low <= cfg.alpha_true <= rec.ci_high for rec in records if not rec.failed]
        )
        assert s.p_cover == recount

    def test_panel_fails_on_many_failures(self):
        cfg = config(density_z=0.0, noise_scale=0.0, p_x=0, density_x=0.0, m=0.0, n_reps=4)
        with pytest.raises(EstimationError, match="replications failed"):
            run_panel(cfg, ("TSRR",), threads=1)


class TestEmission:
    def test_csv_layout(self):
        s = MCSummary(
            bias=-0.01, bias_var=0.002, mse=0.05, p_cover=0.95, length=1.2,
            time_s=0.3, n_reps_used=100, n_failed=0,
        )
        text = panel_csv({"TSRR": s})
        lines = text.strip().split("\n")
        assert lines[0] == "estimator,bias,bias_var,mse,p_cover,length,time_s,n_failed"
        assert lines[1].startswith("TSRR,-0.01,")
        assert lines[1].endswith(",0")

    def test_text_table_contains_columns_and_note(self):
        s = MCSummary(
            bias=0.6167, bias_var=-0.0066, mse=0.9698, p_cover=0.854, length=3.0355,
            time_s=2.1, n_reps_used=500, n_failed=0,
        )
        table = panel_text({"RJIVE": s}, title="panel")
        assert "Bias (Var.)" in table and "P-Cover" in table
        assert "0.6167" in table and "RJIVE" in table
        assert "across-replication variance" in table

    def test_csv_deterministic_except_time(self):
        cfg = config(n_reps=4)
        a = run_panel(cfg, ("TSRR",), threads=1)
        b = run_panel(cfg, ("TSRR",), threads=2)

        def strip_time(csv_text):
            rows = [line.split(",") for line in csv_text.strip().split("\n")]
            return [row[:6] + row[7:] for row in rows]

        assert strip_time(panel_csv(a)) == strip_time(panel_csv(b))
