"""Independent dense oracles for the estimator tests.

Everything here is written against explicit matrix inverses and hat matrices,
deliberately avoiding the factorized code paths in the package, so the two
sides of each comparison stay independent.
"""

import numpy as np


def ridge_coef_dense(G, t, eta):
    """(G'G + n*eta*I)^{-1} G't via an explicit inverse."""
    G = np.asarray(G, dtype=float)
    n, p = G.shape
    return np.linalg.inv(G.T @ G + n * eta * np.eye(p)) @ (G.T @ t)


def hat_matrix_dense(X, eta):
    """Full n x n ridge hat matrix X (X'X + n*eta*I)^{-1} X'."""
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if p == 0:
        return np.zeros((n, n))
    return X @ np.linalg.inv(X.T @ X + n * eta * np.eye(p)) @ X.T


def exact_projector(X):
    """Orthogonal projector onto col(X) via the pseudo-inverse."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if X.shape[1] == 0:
        return np.zeros((n, n))
    return X @ np.linalg.pinv(X)


def tsls_after_partialling(d_hat, d2, y2, X2):
    """Textbook 2SLS point estimate after exact partialling of the controls."""
    n2 = len(y2)
    M = np.eye(n2) - exact_projector(X2)
    return float(d_hat @ M @ y2) / float(d_hat @ M @ d2)


def tsls_variance(d_hat, d2, X2, sigma_eps2):
    """Classical homoskedastic IV sandwich for a given constructed instrument."""
    n2 = len(d2)
    M = np.eye(n2) - exact_projector(X2)
    D = float(d_hat @ M @ d2)
    return float(d_hat @ M @ M @ d_hat) / D**2 * sigma_eps2


def ols_sigma2(y, S):
    """RSS/(n-k) from an explicit least-squares fit."""
    S = np.asarray(S, dtype=float)
    n, k = S.shape
    resid = y - S @ np.linalg.lstsq(S, y, rcond=None)[0]
    return float(resid @ resid) / (n - k)


def jackknife_refit_dense(Z, d, lam):
    """Leave-one-out ridge fitted values by n explicit refits."""
    Z = np.asarray(Z, dtype=float)
    d = np.asarray(d, dtype=float)
    n, p = Z.shape
    out = np.empty(n)
    for i in range(n):
        keep = np.arange(n) != i
        Zi, di = Z[keep], d[keep]
        coef = np.linalg.inv(Zi.T @ Zi + lam * np.eye(p)) @ (Zi.T @ di)
        out[i] = Z[i] @ coef
    return out


def q_ratio_dense(Z, X, eta_z, eta_x):
    """Brute-force trace-ratio diagnostic from fully materialized matrices."""
    Z = np.asarray(Z, dtype=float)
    n, p_z = Z.shape
    H = Z @ np.linalg.inv(Z.T @ Z / n + eta_z * np.eye(p_z)) @ Z.T
    Q = H @ (np.eye(n) - hat_matrix_dense(X, eta_x))
    QQt = Q @ Q.T
    num = np.trace(QQt @ QQt) - np.sum(np.diag(QQt) ** 2)
    den = np.trace(QQt) - np.sum(np.diag(Q) ** 2)
    return num / den
