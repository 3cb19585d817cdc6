"""Ridge-jackknife IV baseline with optional ridge partialling of controls.

The jackknife fitted value for each observation uses a first stage estimated
on all other observations with a ridge penalty ``lam`` added directly to the
Gram matrix (no row scaling, matching the usual RJIVE parameterization).
With many controls the partialled residuals mix information across the whole
sample, which is exactly the failure mode the two-step estimator avoids; this
module exists as that executable baseline.

Variance convention: a sandwich with the jackknife fitted values standing in
for the constructed instrument, the plain squared norm of the fit as the
middle quadratic, and the same ridge error-variance estimator as the two-step
estimator. This is an artifact convention (no variance formula is standard
for this baseline); it upper-bounds the residualized variants and is labeled
as a convention wherever results are emitted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .data import Dataset, build_instrument_block
from .errors import ConfigError, EstimationError
from .ridge import RidgeSpec, residualize, ridge_solve, tune_eta
from .tsrr import (
    EstimateResult,
    confidence_interval,
    estimate_sigma_eps,
    second_stage,
    wald,
)

# Leverage this close to 1 makes the leave-one-out correction blow up.
LEVERAGE_TOL = 1e-10

# Default tuning constant for the error-variance penalty when none is given.
DEFAULT_C_S = 0.1


@dataclass(frozen=True)
class RjiveConfig:
    """Jackknife ridge penalty and control-partialling options.

    ``lam=None`` resolves to p_z (penalty proportional to the instrument
    count). ``eta_s=None`` tunes the error-variance penalty from the data
    with constant ``DEFAULT_C_S``.
    """

    lam: float | None = None
    eta_x: float = 0.0
    partial_controls: bool = True
    eta_s: float | None = None

    def __post_init__(self):
        if self.lam is not None and not (math.isfinite(self.lam) and self.lam > 0):
            raise ConfigError(f"lam must be a positive real, got {self.lam}")
        if not (math.isfinite(self.eta_x) and self.eta_x >= 0):
            raise ConfigError(f"eta_x must be a finite nonnegative real, got {self.eta_x}")


def jackknife_fitted(Zblock: np.ndarray, d: np.ndarray, lam: float) -> np.ndarray:
    """Leave-one-out ridge fitted values d_hat_i = Z_i'(Z_-i'Z_-i + lam I)^{-1}Z_-i'd_-i.

    Computed with one factorization via the leverage identity
    d_hat_i = (Z_i' gamma_full - h_i d_i) / (1 - h_i), which equals the n
    direct refits exactly.
    """
    Z = np.asarray(Zblock, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    n, p = Z.shape
    if n < 3:
        raise ConfigError(f"jackknife needs n >= 3, got {n}")
    if d.shape != (n,):
        raise ConfigError(f"jackknife: d has shape {d.shape}, expected ({n},)")
    if not (math.isfinite(lam) and lam > 0):
        raise ConfigError(f"jackknife penalty must be a positive real, got {lam}")

    if p <= n:
        M = Z.T @ Z
        M[np.diag_indices_from(M)] += lam
        c, low = _factor(M)
        fitted = Z @ scipy.linalg.cho_solve((c, low), Z.T @ d, check_finite=False)
        # h_i = Z_i' M^{-1} Z_i, all i at once
        W = scipy.linalg.cho_solve((c, low), Z.T, check_finite=False)
        h = np.einsum("ij,ji->i", Z, W)
    else:
        K = Z @ Z.T
        Kp = K + lam * np.eye(n)
        c, low = _factor(Kp)
        fitted = K @ scipy.linalg.cho_solve((c, low), d, check_finite=False)
        # h_i = [K (K + lam I)^{-1}]_ii = 1 - lam [(K + lam I)^{-1}]_ii
        Kinv = scipy.linalg.cho_solve((c, low), np.eye(n), check_finite=False)
        h = 1.0 - lam * np.diag(Kinv)

    one_minus_h = 1.0 - h
    if np.any(one_minus_h < LEVERAGE_TOL):
        worst = int(np.argmin(one_minus_h))
        raise EstimationError(
            f"leverage saturation at observation {worst}: 1 - h = {one_minus_h[worst]:.3e}"
        )
    return (fitted - h * d) / one_minus_h


def _factor(M: np.ndarray):
    try:
        return scipy.linalg.cho_factor(M, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise EstimationError("jackknife: singular penalized Gram matrix") from exc


def rjive(
    dataset: Dataset,
    config: RjiveConfig,
    r: float = 0.0,
    level: float = 0.95,
) -> EstimateResult:
    """Jackknife ridge IV estimate with the artifact's sandwich variance.

    With ``partial_controls`` the outcome and treatment are first
    residualized against the controls with the ridge residualizer at
    ``eta_x`` (full sample), and the jackknife runs on the residualized
    treatment over the full instrument block [Z1 | X]. There is no sample
    split: the result reports n1=0 and n2=n.
    """
    if dataset.p_z1 < 1:
        raise ConfigError("IV estimation requires at least one excluded instrument")
    block = build_instrument_block(dataset)
    n, p_z = dataset.n, block.p_z
    lam = float(config.lam) if config.lam is not None else float(p_z)

    partial = config.partial_controls and dataset.p_x > 0
    X_part = dataset.X if partial else np.empty((n, 0))
    d_for_fit = residualize(X_part, config.eta_x, dataset.d)

    d_hat = jackknife_fitted(block.Z, d_for_fit, lam)

    alpha_hat = second_stage(d_hat, dataset.d, dataset.y, X_part, config.eta_x)

    if config.eta_s is not None:
        eta_s = config.eta_s
    else:
        S = np.column_stack([dataset.d, dataset.X]) if dataset.p_x else dataset.d[:, None]
        eta_s = tune_eta(S, dataset.y, DEFAULT_C_S)
    sigma_eps2 = estimate_sigma_eps(dataset.y, dataset.d, dataset.X, eta_s)
    # Sandwich with the jackknife fitted values as the constructed instrument,
    # using the full instrument norm as the middle quadratic. This upper-bounds
    # every residualized variant and deliberately errs on the wide side: the
    # baseline's dominant error under many controls is bias, and a variance
    # that keeps the truth inside the interval is the safer default for a
    # comparator with no distributional theory of its own.
    r_dhat = residualize(X_part, config.eta_x, d_hat)
    den = float(r_dhat @ dataset.d)
    mid = float(d_hat @ d_hat)
    sigma_alpha2 = mid / den**2 * sigma_eps2

    if sigma_alpha2 > 0:
        wald_stat, p_value = wald(alpha_hat, sigma_alpha2, n, r)
    else:
        wald_stat, p_value = (0.0, 1.0) if alpha_hat == r else (math.inf, 0.0)
    ci_low, ci_high = confidence_interval(alpha_hat, sigma_alpha2, n, level)

    # Full-sample ridge coefficients at the raw penalty lam = n * (lam/n).
    gamma_full = ridge_solve(block.Z, d_for_fit, lam / n)
    resid = d_for_fit - d_hat
    return EstimateResult(
        alpha_hat=alpha_hat,
        sigma_alpha2=sigma_alpha2,
        sigma_eps2=sigma_eps2,
        ci_low=ci_low,
        ci_high=ci_high,
        wald=wald_stat,
        p_value=p_value,
        n1=0,
        n2=n,
        eta_used=RidgeSpec(eta_x=config.eta_x, eta_z=0.0, eta_s=eta_s),
        first_stage_norm=float(np.linalg.norm(gamma_full)),
        sigma_v2=float(resid @ resid) / n,
    )
