"""Two-step ridge IV estimator with sandwich variance, Wald test, and CI.

Pipeline: a ridge regression of the treatment on the full instrument block
[Z1 | X] over split 1 produces first-stage coefficients; fitted values on
split 2 act as the constructed instrument; the second stage is least squares
after ridge-residualizing the controls out of treatment and outcome, with a
sandwich variance built from the same residualizer and a ridge-based
error-variance estimator with degrees-of-freedom correction 1 - tr(P)/n2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
from scipy import stats

from .data import Dataset, SplitIndex, build_instrument_block
from .errors import (
    ConfigError,
    EstimationError,
    SaturatedFitError,
    WeakIdentificationError,
)
from .ridge import RidgeSpec, residualize, ridge_solve, trace_hat, tune_eta

# Relative threshold below which the second-stage denominator is treated as a
# weak-identification failure rather than divided through.
WEAK_ID_RTOL = 1e-12

# Threshold on 1 - tr(P)/n2 below which the ridge fit is considered saturated.
SATURATION_TOL = 1e-8


@dataclass(frozen=True)
class EstimateResult:
    """Point estimate with variance, interval, test, and diagnostics.

    ``sigma_alpha2`` is the population-scale variance: the standard error of
    ``alpha_hat`` is sqrt(sigma_alpha2 / (n1 + n2)), and the Wald statistic
    is (n1 + n2) (alpha_hat - r)^2 / sigma_alpha2. ``eta_used`` echoes the
    fully resolved penalties. ``first_stage_norm`` is the Euclidean norm of
    the first-stage coefficient vector (a relevance diagnostic) and
    ``sigma_v2`` the first-stage residual variance.
    """

    alpha_hat: float
    sigma_alpha2: float
    sigma_eps2: float
    ci_low: float
    ci_high: float
    wald: float
    p_value: float
    n1: int
    n2: int
    eta_used: RidgeSpec
    first_stage_norm: float
    sigma_v2: float


def first_stage(Zblock: np.ndarray, d1: np.ndarray, eta_z: float) -> np.ndarray:
    """Ridge coefficients of the treatment on the instrument block (split 1)."""
    Zblock = np.asarray(Zblock, dtype=np.float64)
    n1, p_z = Zblock.shape
    if eta_z == 0.0 and p_z > n1:
        raise EstimationError(
            f"first stage needs eta_z > 0 when p_z={p_z} > n1={n1}", stage="first_stage"
        )
    return ridge_solve(Zblock, d1, eta_z)


def predict_optimal_instrument(Z2: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Fitted treatment values Z2 @ gamma on the inference split."""
    Z2 = np.asarray(Z2, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    if Z2.ndim != 2 or gamma.ndim != 1 or Z2.shape[1] != gamma.shape[0]:
        raise ConfigError(
            f"predict_optimal_instrument: shapes {Z2.shape} and {gamma.shape} do not align"
        )
    return Z2 @ gamma


def _second_stage_parts(
    d_hat: np.ndarray, d2: np.ndarray, X2: np.ndarray, eta_x: float
) -> tuple[np.ndarray, float]:
    """Residualized instrument and the identification denominator d_hat'(I-A)d2."""
    r_dhat = residualize(X2, eta_x, d_hat)
    den = float(r_dhat @ d2)
    scale = float(np.linalg.norm(d_hat) * np.linalg.norm(d2))
    if abs(den) < WEAK_ID_RTOL * scale or scale == 0.0:
        raise WeakIdentificationError(
            f"weak identification: |d_hat'(I-A)d| = {abs(den):.3e} below threshold "
            f"{WEAK_ID_RTOL * scale:.3e}"
        )
    return r_dhat, den


def second_stage(
    d_hat: np.ndarray,
    d2: np.ndarray,
    y2: np.ndarray,
    X2: np.ndarray,
    eta_x: float,
) -> float:
    """Least squares of outcome on treatment after ridge-partialling controls.

    Returns [d_hat'(I-A)d2]^{-1} [d_hat'(I-A)y2] with A the ridge hat of X2.
    """
    r_dhat, den = _second_stage_parts(d_hat, d2, X2, eta_x)
    return float(r_dhat @ y2) / den


def error_variance_from_design(S: np.ndarray, y: np.ndarray, eta_s: float) -> float:
    """Ridge error-variance estimate [y'(I-P)y/n] / [1 - tr(P)/n] for design S.

    S may have zero columns, in which case the estimate is y'y/n.
    """
    S = np.asarray(S, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    if S.shape[1] == 0:
        return float(y @ y) / n
    denom = 1.0 - trace_hat(S, eta_s) / n
    if denom <= SATURATION_TOL:
        raise SaturatedFitError(
            f"saturated fit: 1 - tr(P)/n = {denom:.3e} <= {SATURATION_TOL:.0e}; "
            "increase eta_s or reduce the design"
        )
    quad = float(y @ residualize(S, eta_s, y))
    return max(quad, 0.0) / n / denom


def estimate_sigma_eps(
    y2: np.ndarray, d2: np.ndarray, X2: np.ndarray, eta_s: float
) -> float:
    """Error variance from the augmented design S = [d2 | X2] on split 2."""
    d2 = np.asarray(d2, dtype=np.float64)
    X2 = np.asarray(X2, dtype=np.float64)
    S = np.column_stack([d2, X2]) if X2.size else d2[:, None]
    return error_variance_from_design(S, y2, eta_s)


def estimate_sigma_alpha(
    d_hat: np.ndarray,
    d2: np.ndarray,
    X2: np.ndarray,
    eta_x: float,
    sigma_eps2: float,
) -> float:
    """Sandwich variance D^{-1} [d_hat'(I-A)^2 d_hat] D^{-1} sigma_eps2, D = d_hat'(I-A)d2.

    Returns the raw-product sandwich; the orchestrator converts it to the
    population scale (times n2) for n-scaled inference. The middle quadratic
    keeps the exact square of the residualizer: the commonly quoted
    simplification (I-A)^2 ~ (I-A) is exact when A is a projector, but with
    p > n and a data-driven penalty it inflates the variance by several
    orders of magnitude, so it is not used here. At eta_x = 0 (projector
    case) the two forms coincide.
    """
    r_dhat, den = _second_stage_parts(d_hat, d2, X2, eta_x)
    r2_dhat = residualize(X2, eta_x, r_dhat)
    mid = max(float(np.asarray(d_hat, dtype=np.float64) @ r2_dhat), 0.0)
    return mid / den**2 * sigma_eps2


def wald(alpha_hat: float, sigma_alpha2: float, n_obs: int, r: float) -> tuple[float, float]:
    """Wald statistic n_obs*(alpha_hat - r)^2 / sigma_alpha2 and its chi-square(1) p-value.

    ``n_obs`` is the observation count that scales the statistic; the two-step
    orchestrator passes the full sample size n = n1 + n2.
    """
    if not (sigma_alpha2 > 0):
        raise ConfigError(f"wald: sigma_alpha2 must be positive, got {sigma_alpha2}")
    w = n_obs * (alpha_hat - r) ** 2 / sigma_alpha2
    return float(w), float(stats.chi2.sf(w, df=1))


def confidence_interval(
    alpha_hat: float, sigma_alpha2: float, n_obs: int, level: float
) -> tuple[float, float]:
    """Two-sided normal interval alpha_hat +- z_{(1+level)/2} * sqrt(sigma_alpha2/n_obs)."""
    if not (0.0 < level < 1.0):
        raise ConfigError(f"confidence level must be in (0,1), got {level}")
    if sigma_alpha2 < 0:
        raise ConfigError(f"sigma_alpha2 must be nonnegative, got {sigma_alpha2}")
    half = stats.norm.ppf(0.5 + level / 2.0) * math.sqrt(sigma_alpha2 / n_obs)
    return float(alpha_hat - half), float(alpha_hat + half)


def resolve_penalties(
    spec: RidgeSpec,
    Z1blk: np.ndarray,
    d1: np.ndarray,
    X2: np.ndarray,
    y2: np.ndarray,
    S2: np.ndarray,
) -> RidgeSpec:
    """Materialize tuned penalties for one estimation.

    Tuned eta_x and eta_z are coupled to their minimum when neither is given
    explicitly; any explicit value is used as-is for its stage.
    """
    p_x = X2.shape[1]
    tuned_x = tune_eta(X2, y2, spec.c_x) if p_x > 0 else 0.0
    tuned_z = tune_eta(Z1blk, d1, spec.c_z)
    if spec.eta_x is None and spec.eta_z is None:
        eta = min(tuned_x, tuned_z) if p_x > 0 else tuned_z
        eta_x, eta_z = (eta, eta) if p_x > 0 else (0.0, eta)
    else:
        eta_x = spec.eta_x if spec.eta_x is not None else tuned_x
        eta_z = spec.eta_z if spec.eta_z is not None else tuned_z
    if spec.eta_s is not None:
        eta_s = spec.eta_s
    else:
        c_s = spec.c_s if spec.c_s is not None else spec.c_x
        eta_s = tune_eta(S2, y2, c_s)
    return replace(spec, eta_x=eta_x, eta_z=eta_z, eta_s=eta_s)


def _stage(exc: EstimationError, stage: str) -> EstimationError:
    if exc.stage is None:
        exc.stage = stage
        exc.args = (f"{stage}: {exc.args[0]}",) + exc.args[1:]
    return exc


def tsrr(
    dataset: Dataset,
    spec: RidgeSpec,
    split: SplitIndex,
    r: float = 0.0,
    level: float = 0.95,
) -> EstimateResult:
    """Run the full two-step ridge IV pipeline on a dataset and split.

    The Wald statistic tests H0: alpha = r; the confidence interval is the
    two-sided normal interval at ``level``. Deterministic given its inputs.
    """
    if dataset.p_z1 < 1:
        raise ConfigError("IV estimation requires at least one excluded instrument")
    if split.n != dataset.n:
        raise ConfigError(
            f"split covers {split.n} rows but the dataset has {dataset.n}"
        )
    block = build_instrument_block(dataset)
    i1, i2 = split.part1, split.part2
    Z1blk, d1 = block.Z[i1], dataset.d[i1]
    Z2blk, d2, y2, X2 = block.Z[i2], dataset.d[i2], dataset.y[i2], dataset.X[i2]
    S2 = np.column_stack([d2, X2]) if dataset.p_x else d2[:, None]

    resolved = resolve_penalties(spec, Z1blk, d1, X2, y2, S2)

    try:
        gamma = first_stage(Z1blk, d1, resolved.eta_z)
    except EstimationError as exc:
        raise _stage(exc, "first_stage")
    d_hat = predict_optimal_instrument(Z2blk, gamma)

    try:
        alpha_hat = second_stage(d_hat, d2, y2, X2, resolved.eta_x)
    except EstimationError as exc:
        raise _stage(exc, "second_stage")
    try:
        sigma_eps2 = estimate_sigma_eps(y2, d2, X2, resolved.eta_s)
    except EstimationError as exc:
        raise _stage(exc, "error_variance")
    try:
        sandwich = estimate_sigma_alpha(d_hat, d2, X2, resolved.eta_x, sigma_eps2)
    except EstimationError as exc:
        raise _stage(exc, "sandwich_variance")

    # Population-scale variance: the sandwich with sample-averaged inner
    # products, i.e. n2 times the raw-product form. Inference then scales by
    # the full sample size n (the Wald form W = n (alpha_hat - r)^2 /
    # sigma_alpha2), which is calibrated for (near-)even splits.
    sigma_alpha2 = split.n2 * sandwich
    if sigma_alpha2 > 0:
        wald_stat, p_value = wald(alpha_hat, sigma_alpha2, split.n, r)
    else:
        wald_stat, p_value = (0.0, 1.0) if alpha_hat == r else (math.inf, 0.0)
    ci_low, ci_high = confidence_interval(alpha_hat, sigma_alpha2, split.n, level)

    v1 = d1 - Z1blk @ gamma
    return EstimateResult(
        alpha_hat=alpha_hat,
        sigma_alpha2=sigma_alpha2,
        sigma_eps2=sigma_eps2,
        ci_low=ci_low,
        ci_high=ci_high,
        wald=wald_stat,
        p_value=p_value,
        n1=split.n1,
        n2=split.n2,
        eta_used=resolved,
        first_stage_norm=float(np.linalg.norm(gamma)),
        sigma_v2=float(v1 @ v1) / split.n1,
    )


def q_diagnostic(
    Zblock: np.ndarray,
    X: np.ndarray,
    eta_z: float,
    eta_x: float,
    max_n: int = 2000,
) -> float:
    """Trace-ratio diagnostic for the consistency condition on Q = H_z (I - A).

    H_z = Z (Z'Z/n + eta_z I)^{-1} Z' and A is the ridge hat of the controls.
    Returns [tr(QQ'QQ') - tr(QQ' o QQ')] / [tr(QQ') - tr(Q o Q)] where ``o``
    keeps only diagonal products; the ratio should shrink as n grows. The n x n
    matrix Q is materialized, so n is capped at ``max_n``.
    """
    Z = np.asarray(Zblock, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    n, p_z = Z.shape
    if n > max_n:
        raise ConfigError(f"q_diagnostic materializes an n x n matrix; n={n} > cap {max_n}")
    if X.shape[0] != n:
        raise ConfigError("q_diagnostic: Zblock and X must have the same rows")
    if eta_z < 0 or eta_x < 0:
        raise ConfigError("q_diagnostic: penalties must be nonnegative")

    # H_z via the smaller Gram: Z (Z'Z/n + eta I)^{-1} Z' = n K (K + n*eta I)^{-1}
    if p_z <= n:
        M = (Z.T @ Z) / n
        M[np.diag_indices_from(M)] += eta_z
        H = Z @ _psd_solve(M, Z.T, "q_diagnostic")
    else:
        if eta_z == 0.0:
            raise EstimationError("q_diagnostic: eta_z=0 with p_z > n is rank deficient")
        K = Z @ Z.T
        Kp = K + n * eta_z * np.eye(n)
        H = n * _psd_solve(Kp, K, "q_diagnostic").T

    p_x = X.shape[1]
    if p_x == 0:
        Q = H
    else:
        if p_x <= n:
            Mx = X.T @ X
            Mx[np.diag_indices_from(Mx)] += n * eta_x
            A = X @ _psd_solve(Mx, X.T, "q_diagnostic")
        else:
            if eta_x == 0.0:
                raise EstimationError("q_diagnostic: eta_x=0 with p_x > n is rank deficient")
            Kx = X @ X.T
            Kxp = Kx + n * eta_x * np.eye(n)
            A = _psd_solve(Kxp, Kx, "q_diagnostic").T
        Q = H - H @ A

    QQt = Q @ Q.T
    den = float(np.sum(Q * Q) - np.sum(np.diag(Q) ** 2))
    if den <= 1e-12:
        raise EstimationError(
            f"q_diagnostic: degenerate denominator {den:.3e} (Q nearly diagonal or zero)"
        )
    num = float(np.sum(QQt * QQt) - np.sum(np.diag(QQt) ** 2))
    return num / den


def _psd_solve(M: np.ndarray, rhs: np.ndarray, context: str) -> np.ndarray:
    try:
        c, low = scipy.linalg.cho_factor(M, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise EstimationError(f"{context}: singular system") from exc
    return scipy.linalg.cho_solve((c, low), rhs, check_finite=False)
