"""Tests for the jackknife ridge IV baseline."""

import numpy as np
import pytest

from oracles import jackknife_refit_dense
from ridgeiv import (
    ConfigError,
    Dataset,
    EstimationError,
    RidgeSpec,
    RjiveConfig,
    SimConfig,
    generate,
    jackknife_fitted,
    rjive,
    split_indices,
    tsrr,
)


class TestJackknifeFitted:
    def test_leverage_identity_matches_refits(self):
        rng = np.random.default_rng(0)
        Z = rng.normal(size=(15, 4))
        d = rng.normal(size=15)
        got = jackknife_fitted(Z, d, 0.8)
        want = jackknife_refit_dense(Z, d, 0.8)
        assert np.max(np.abs(got - want)) <= 1e-10

    def test_leverage_identity_wide_design(self):
        rng = np.random.default_rng(1)
        Z = rng.normal(size=(12, 30))
        d = rng.normal(size=12)
        got = jackknife_fitted(Z, d, 5.0)
        want = jackknife_refit_dense(Z, d, 5.0)
        assert np.max(np.abs(got - want)) <= 1e-10

    def test_huge_penalty_shrinks_to_zero(self):
        rng = np.random.default_rng(2)
        Z = rng.normal(size=(20, 6))
        d = rng.normal(size=20)
        fitted = jackknife_fitted(Z, d, 1e12)
        bound = np.max(np.abs(Z)) * np.linalg.norm(Z.T @ d) / 1e12
        assert np.max(np.abs(fitted)) <= bound * 20

    def test_small_penalty_matches_ols_jackknife(self):
        # d in col(Z), lam -> 0+: leave-one-out OLS fits
        rng = np.random.default_rng(3)
        n, p = 25, 4
        Z = rng.normal(size=(n, p))
        d = Z @ rng.normal(size=p)
        got = jackknife_fitted(Z, d, 1e-10)
        want = np.empty(n)
        for i in range(n):
            keep = np.arange(n) != i
            coef = np.linalg.lstsq(Z[keep], d[keep], rcond=None)[0]
            want[i] = Z[i] @ coef
        assert np.max(np.abs(got - want)) <= 1e-8

    def test_leverage_bounds(self):
        rng = np.random.default_rng(4)
        for n, p in [(20, 5), (10, 25)]:
            Z = rng.normal(size=(n, p))
            lam = 2.0
            if p <= n:
                M = Z.T @ Z + lam * np.eye(p)
                h = np.einsum("ij,ji->i", Z, np.linalg.solve(M, Z.T))
            else:
                K = Z @ Z.T + lam * np.eye(n)
                h = 1.0 - lam * np.diag(np.linalg.inv(K))
            assert np.all(h > 0.0) and np.all(h < 1.0)

    def test_no_self_influence(self):
        # changing d_i does not move the direct leave-one-out value for i
        rng = np.random.default_rng(5)
        Z = rng.normal(size=(12, 3))
        d = rng.normal(size=12)
        lam = 0.7
        base = jackknife_fitted(Z, d, lam)
        bumped = d.copy()
        bumped[4] += 10.0
        after = jackknife_fitted(Z, bumped, lam)
        assert after[4] == pytest.approx(base[4], rel=1e-10, abs=1e-10)

    def test_nonpositive_penalty_rejected(self):
        Z = np.ones((5, 2))
        for lam in (0.0, -1.0):
            with pytest.raises(ConfigError):
                jackknife_fitted(Z, np.ones(5), lam)

    def test_needs_three_rows(self):
        with pytest.raises(ConfigError, match="n >= 3"):
            jackknife_fitted(np.ones((2, 1)), np.ones(2), 1.0)


class TestRjiveConfig:
    def test_defaults(self):
        cfg = RjiveConfig()
        assert cfg.lam is None and cfg.partial_controls and cfg.eta_s is None

    def test_invalid_lambda(self):
        with pytest.raises(ConfigError):
            RjiveConfig(lam=0.0)

    def test_invalid_eta_x(self):
        with pytest.raises(ConfigError):
            RjiveConfig(eta_x=-0.5)


class TestRjive:
    def test_noiseless_recovery_no_controls(self):
        cfg = SimConfig(
            n=80,
            p_x=0,
            p_z1=6,
            corr="EC",
            rho=0.04,
            gamma_x_pattern="nonsparse_dense",
            gamma_z_pattern="cutoff",
            density_z=0.7,
            noise_scale=0.0,
            seed=3,
            n_reps=2,
        )
        ds, _ = generate(cfg, 0)
        res = rjive(ds, RjiveConfig(lam=1e-8, partial_controls=False), r=1.0)
        assert res.alpha_hat == pytest.approx(1.0, rel=1e-6)

    def test_lambda_defaults_to_instrument_count(self):
        cfg = SimConfig(
            n=60,
            p_x=8,
            p_z1=5,
            corr="EC",
            rho=0.04,
            gamma_x_pattern="nonsparse_dense",
            gamma_z_pattern="cutoff",
            density_x=0.3,
            density_z=0.7,
            seed=4,
            n_reps=2,
        )
        ds, _ = generate(cfg, 0)
        explicit = rjive(ds, RjiveConfig(lam=float(ds.p_x + ds.p_z1)), r=1.0)
        default = rjive(ds, RjiveConfig(lam=None), r=1.0)
        assert default.alpha_hat == explicit.alpha_hat

    def test_result_counts_and_interval(self):
        cfg = SimConfig(
            n=70,
            p_x=10,
            p_z1=6,
            corr="AR1",
            rho=0.5,
            gamma_x_pattern="sparse",
            gamma_z_pattern="cutoff",
            density_x=0.3,
            density_z=0.7,
            seed=5,
            n_reps=2,
        )
        ds, _ = generate(cfg, 1)
        res = rjive(ds, RjiveConfig(), r=1.0)
        assert res.n1 == 0 and res.n2 == ds.n
        assert res.ci_low <= res.alpha_hat <= res.ci_high
        assert res.sigma_eps2 > 0 and res.sigma_alpha2 > 0

    def test_requires_instruments(self):
        rng = np.random.default_rng(6)
        ds = Dataset(
            y=rng.normal(size=10),
            d=rng.normal(size=10),
            X=rng.normal(size=(10, 2)),
            Z1=np.empty((10, 0)),
        )
        with pytest.raises(ConfigError, match="excluded instrument"):
            rjive(ds, RjiveConfig())

    def test_partialled_bias_dominates_tsrr(self):
        # the inconsistency witness: with many controls partialled by ridge,
        # the jackknife baseline is far more biased than the two-step estimator
        cfg = SimConfig(
            n=200,
            p_x=140,
            p_z1=100,
            corr="EC",
            rho=0.04,
            gamma_x_pattern="nonsparse_dense",
            gamma_z_pattern="cutoff",
            density_x=0.05,
            density_z=0.7,
            seed=31,
            n_reps=40,
        )
        from ridgeiv import tune_eta
        from ridgeiv.dgp import split_seed

        tsrr_est, rjive_est = [], []
        for rep in range(cfg.n_reps):
            ds, _ = generate(cfg, rep)
            sp = split_indices(cfg.n, 0.5, split_seed(cfg.seed, rep))
            tsrr_est.append(tsrr(ds, RidgeSpec(), sp, r=1.0).alpha_hat)
            eta_x = tune_eta(ds.X, ds.y, cfg.c_x)
            rjive_est.append(rjive(ds, RjiveConfig(eta_x=eta_x), r=1.0).alpha_hat)
        bias_tsrr = abs(np.mean(tsrr_est) - 1.0)
        bias_rjive = abs(np.mean(rjive_est) - 1.0)
        assert bias_rjive >= 5.0 * bias_tsrr
        assert bias_rjive > 0.2
