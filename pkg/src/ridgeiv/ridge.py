"""Shared ridge primitives: penalized solves, residualization, hat trace, tuning.

Normalization convention
------------------------
Every penalized solve in this library uses the row-scaled Gram form

    (G'G + n*eta*I) b = G't,

so ``eta`` is comparable across sample sizes (adding one row does not dilute
the penalty). The corresponding ridge hat operator is

    A = G (G'G + n*eta*I)^{-1} G',

which at eta = 0 reduces to the orthogonal projector onto col(G). All
higher-level estimators state their penalties in this convention.

Solves factorize the Gram matrix of the smaller side: the p x p primal form
when p <= n, otherwise the n x n dual form via the push-through identity
(G'G + k I)^{-1} G' = G' (GG' + k I)^{-1}. The n x n hat matrix itself is
never materialized outside of test oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigError, EstimationError


@dataclass(frozen=True)
class RidgeSpec:
    """Penalty configuration for the two-step estimator.

    ``eta_x`` (control residualizer), ``eta_z`` (first stage) and ``eta_s``
    (error-variance hat) may be given explicitly; ``None`` means "tune from
    the data" with the corresponding constant ``c_x``/``c_z``/``c_s``. When
    both eta_x and eta_z are tuned, the orchestrator couples them to
    min(eta_x, eta_z). ``c_s=None`` falls back to ``c_x``.
    """

    eta_x: float | None = None
    eta_z: float | None = None
    eta_s: float | None = None
    c_x: float = 0.1
    c_z: float = 0.1
    c_s: float | None = None

    def __post_init__(self):
        for name in ("eta_x", "eta_z", "eta_s", "c_x", "c_z", "c_s"):
            value = getattr(self, name)
            if value is None:
                continue
            if not math.isfinite(value) or value < 0:
                raise ConfigError(f"{name} must be a finite nonnegative real, got {value}")


def _check_design(G: np.ndarray, t: np.ndarray, eta: float, op: str) -> tuple[np.ndarray, np.ndarray]:
    G = np.asarray(G, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if G.ndim != 2:
        raise ConfigError(f"{op}: design must be 2-D, got shape {G.shape}")
    if t.shape[0] != G.shape[0]:
        raise ConfigError(f"{op}: {G.shape[0]} rows in design but {t.shape[0]} targets")
    if not (math.isfinite(eta) and eta >= 0):
        raise ConfigError(f"{op}: penalty must be a finite nonnegative real, got {eta}")
    if not np.all(np.isfinite(G)) or not np.all(np.isfinite(t)):
        raise ConfigError(f"{op}: non-finite inputs")
    return G, t


def _cho_solve(M: np.ndarray, rhs: np.ndarray, context: str) -> np.ndarray:
    try:
        c, low = scipy.linalg.cho_factor(M, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise EstimationError(
            f"{context}: singular system; supply a positive penalty or a full-rank design"
        ) from exc
    return scipy.linalg.cho_solve((c, low), rhs, check_finite=False)


def ridge_solve(G: np.ndarray, t: np.ndarray, eta: float) -> np.ndarray:
    """Solve (G'G + n*eta*I) b = G't by a positive-definite factorization.

    ``t`` may be a vector or a matrix of stacked targets (the solve is exactly
    linear in t). At eta = 0 the design must have full column rank; no
    pseudo-inverse fallback is attempted.
    """
    G, t = _check_design(G, t, eta, "ridge_solve")
    n, p = G.shape
    if p == 0:
        return np.zeros((0,) + t.shape[1:])
    kappa = n * eta
    if p <= n or eta == 0.0:
        if eta == 0.0 and p > n:
            raise EstimationError(
                f"ridge_solve: eta=0 with p={p} > n={n} is rank deficient"
            )
        M = G.T @ G
        M[np.diag_indices_from(M)] += kappa
        return _cho_solve(M, G.T @ t, "ridge_solve")
    K = G @ G.T
    K[np.diag_indices_from(K)] += kappa
    return G.T @ _cho_solve(K, t, "ridge_solve")


def residualize(X: np.ndarray, eta: float, w: np.ndarray) -> np.ndarray:
    """Apply (I - A)w with A = X(X'X + n*eta*I)^{-1}X'.

    With zero columns this is the identity; at eta = 0 with a full-column-rank
    design it is exact orthogonal projection off col(X).
    """
    X, w = _check_design(X, w, eta, "residualize")
    if X.shape[1] == 0:
        return w.copy()
    return w - X @ ridge_solve(X, w, eta)


def trace_hat(X: np.ndarray, eta: float) -> float:
    """Trace of the ridge hat operator, sum_j s_j^2 / (s_j^2 + n*eta).

    Computed from the eigenvalues of the smaller Gram matrix; at eta = 0 the
    trace equals rank(X).
    """
    X = np.asarray(X, dtype=np.float64)
    X, _ = _check_design(X, np.zeros(X.shape[0] if X.ndim == 2 else 0), eta, "trace_hat")
    n, p = X.shape
    if p == 0:
        return 0.0
    gram = X.T @ X if p <= n else X @ X.T
    evals = scipy.linalg.eigvalsh(gram, check_finite=False)
    evals = np.clip(evals, 0.0, None)
    if eta == 0.0:
        top = evals[-1]
        if top <= 0.0:
            return 0.0
        tol = top * max(n, p) * np.finfo(np.float64).eps
        return float(np.count_nonzero(evals > tol))
    return float(np.sum(evals / (evals + n * eta)))


def tune_eta(M: np.ndarray, target: np.ndarray, c: float) -> float:
    """Data-driven penalty c * max_j |col_j(M)' target| / (n*p)."""
    M, target = _check_design(M, target, 0.0, "tune_eta")
    n, p = M.shape
    if p == 0:
        raise ConfigError("tune_eta: design has no columns; supply an explicit eta")
    if not (math.isfinite(c) and c >= 0):
        raise ConfigError(f"tune_eta: constant must be a finite nonnegative real, got {c}")
    return float(c * np.max(np.abs(M.T @ target)) / (n * p))
