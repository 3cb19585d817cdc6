"""Synthetic designs: correlated Gaussian regressors, patterned coefficients
with concentration-parameter calibration, and correlated structural errors.

Reproducibility scheme: a single master seed plus a replication index address
independent substreams through ``SeedSequence(seed, spawn_key=(rep, purpose))``
with purposes REGRESSORS=0, COEF_X=1, COEF_Z=2, ERRORS=3, SPLIT=4. Replications
can therefore be generated in any order, or in parallel, without changing any
draw. Streams are stable run-to-run on a given build of numpy's PCG64.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass


import numpy as np
import scipy.linalg

from .data import Dataset
from .errors import ConfigError

PURPOSE_REGRESSORS = 0
PURPOSE_COEF_X = 1
PURPOSE_COEF_Z = 2
PURPOSE_ERRORS = 3
PURPOSE_SPLIT = 4

N_STRONG = 5  # leading strong-signal coefficients in every control pattern

_CORR_KINDS = ("EC", "AR1")
_GAMMA_X_PATTERNS = ("nonsparse_dense", "sparse")
_GAMMA_Z_PATTERNS = ("all_weak", "cutoff")


def substream(seed: int, rep: int, purpose: int) -> np.random.Generator:
    """Independent generator for one (replication, purpose) cell."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(rep, purpose)))


def split_seed(seed: int, rep: int) -> int:
    """Derived integer seed for the replication's sample split."""
    ss = np.random.SeedSequence(seed, spawn_key=(rep, PURPOSE_SPLIT))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class SimConfig:
    """Full description of one simulation panel: design, estimator tuning,
    replication count, and master seed.

    ``density_x``/``density_z`` are the nonzero fractions of the coefficient
    positions after the strong block (controls) and of the instrument
    coefficients. ``noise_scale`` multiplies both structural errors (0 gives
    the noiseless variant used by exact-recovery checks). Controls and
    excluded instruments are drawn as independent correlated blocks by
    default; ``independent_blocks=False`` draws them as one jointly
    correlated (p_z1 + p_x)-dimensional block instead, which induces
    cross-block correlation and visibly biases both estimators.
    ``randomize_support`` scatters the nonzero coefficient positions instead
    of using the leading ones.
    """

    n: int
    p_x: int
    p_z1: int
    corr: str
    rho: float
    gamma_x_pattern: str
    gamma_z_pattern: str
    m: float = 1.0
    density_x: float = 0.05
    density_z: float = 0.70
    mu_x2: float = 600.0
    mu_z2: float = 600.0
    sigma_ev: float = 0.6
    alpha_true: float = 1.0
    c_x: float = 0.1
    c_z: float = 0.1
    split_fraction: float = 0.5
    n_reps: int = 500
    seed: int = 0
    noise_scale: float = 1.0
    independent_blocks: bool = True
    randomize_support: bool = False

    def __post_init__(self):
        if self.corr not in _CORR_KINDS:
            raise ConfigError(f"corr must be one of {_CORR_KINDS}, got {self.corr!r}")
        if self.gamma_x_pattern not in _GAMMA_X_PATTERNS:
            raise ConfigError(
                f"gamma_x_pattern must be one of {_GAMMA_X_PATTERNS}, got {self.gamma_x_pattern!r}"
            )
        if self.gamma_z_pattern not in _GAMMA_Z_PATTERNS:
            raise ConfigError(
                f"gamma_z_pattern must be one of {_GAMMA_Z_PATTERNS}, got {self.gamma_z_pattern!r}"
            )
        if self.n < 3:
            raise ConfigError(f"n must be >= 3, got {self.n}")
        if self.p_x < 0 or self.p_z1 < 1:
            raise ConfigError(f"need p_x >= 0 and p_z1 >= 1, got {self.p_x}, {self.p_z1}")
        if 0 < self.p_x < N_STRONG:
            raise ConfigError(
                f"control patterns need p_x = 0 or p_x >= {N_STRONG}, got {self.p_x}"
            )
        for name in ("density_x", "density_z"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0,1], got {value}")
        if not -1.0 < self.sigma_ev < 1.0:
            raise ConfigError(f"sigma_ev must be in (-1,1), got {self.sigma_ev}")
        if self.mu_x2 <= 0 or self.mu_z2 <= 0:
            raise ConfigError("signal strengths mu_x2 and mu_z2 must be positive")
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigError(f"split_fraction must be in (0,1), got {self.split_fraction}")
        if self.n_reps < 1:
            raise ConfigError(f"n_reps must be >= 1, got {self.n_reps}")
        if self.c_x < 0 or self.c_z < 0:
            raise ConfigError("tuning constants c_x and c_z must be nonnegative")
        if self.noise_scale < 0:
            raise ConfigError(f"noise_scale must be nonnegative, got {self.noise_scale}")
        # Positive-definiteness of the largest correlation matrix drawn.
        p_max = self.p_x + self.p_z1 if not self.independent_blocks else max(self.p_x, self.p_z1)
        _check_corr(p_max, self.corr, self.rho)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "SimConfig":
        data = {k: v for k, v in raw.items() if k != "comment"}
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown simulation config fields: {sorted(unknown)}")
        missing = {"n", "p_x", "p_z1", "corr", "rho", "gamma_x_pattern", "gamma_z_pattern"} - set(data)
        if missing:
            raise ConfigError(f"simulation config missing required fields: {sorted(missing)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: str | os.PathLike) -> "SimConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)


@dataclass(frozen=True)
class CoefDraw:
    """Realized coefficient vectors for one replication, with the applied
    calibration constants."""

    gamma_x: np.ndarray
    gamma_z: np.ndarray
    c_applied_x: float
    c_applied_z: float


def _check_corr(p: int, corr: str, rho: float) -> None:
    if corr == "EC":
        lower = -1.0 / (p - 1) if p > 1 else -1.0
        if not lower < rho < 1.0:
            raise ConfigError(
                f"EC correlation needs rho in ({lower:.6g}, 1) for p={p}, got {rho}"
            )
    else:
        if not -1.0 < rho < 1.0:
            raise ConfigError(f"AR1 correlation needs |rho| < 1, got {rho}")


def corr_matrix(p: int, corr: str, rho: float) -> np.ndarray:
    """Equicorrelation (constant rho off-diagonal) or AR(1) (rho^|i-j|) matrix."""
    if corr not in _CORR_KINDS:
        raise ConfigError(f"corr must be one of {_CORR_KINDS}, got {corr!r}")
    if p < 1:
        raise ConfigError(f"correlation matrix needs p >= 1, got {p}")
    _check_corr(p, corr, rho)
    if corr == "EC":
        sigma = np.full((p, p), rho)
        np.fill_diagonal(sigma, 1.0)
        return sigma
    return scipy.linalg.toeplitz(rho ** np.arange(p))


def sample_gaussian_block(Sigma: np.ndarray, n: int, stream: np.random.Generator) -> np.ndarray:
    """n i.i.d. rows from N(0, Sigma) via a Cholesky factor."""
    Sigma = np.asarray(Sigma, dtype=np.float64)
    try:
        L = scipy.linalg.cholesky(Sigma, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise ConfigError("covariance matrix is not positive definite") from exc
    return stream.standard_normal((n, Sigma.shape[0])) @ L.T


def scaling_constant(mu2: float, n: int, xi: np.ndarray, Sigma: np.ndarray) -> float:
    """Calibration constant c = sqrt(mu2 / (n*q + mu2*q)) with q = xi'Sigma xi."""
    if mu2 < 0:
        raise ConfigError(f"signal strength must be nonnegative, got {mu2}")
    if mu2 == 0.0:
        return 0.0
    xi = np.asarray(xi, dtype=np.float64)
    q = float(xi @ (np.asarray(Sigma, dtype=np.float64) @ xi))
    if q <= 1e-300:
        raise ConfigError("degenerate quadratic form xi'Sigma xi in scaling constant")
    return math.sqrt(mu2 / (n * q + mu2 * q))


def _support(first: int, count: int, total: int, stream: np.random.Generator, randomize: bool) -> np.ndarray:
    if randomize:
        return first + np.sort(stream.choice(total - first, size=count, replace=False))
    return np.arange(first, first + count)


def make_gamma_x(config: SimConfig, Sigma_x: np.ndarray, stream: np.random.Generator) -> tuple[np.ndarray, float]:
    """Control coefficients: N_STRONG leading entries of magnitude m, then a
    density_x share of the remainder set to c*xi with xi ~ N(0,1) and c
    calibrated to signal strength mu_x2. Returns (gamma_x, c)."""
    p = config.p_x
    if p == 0:
        return np.zeros(0), 0.0
    if p < N_STRONG:
        raise ConfigError(f"control pattern needs p_x >= {N_STRONG}, got {p}")
    gamma = np.zeros(p)
    gamma[:N_STRONG] = config.m
    k = _round_half_up(config.density_x * (p - N_STRONG))
    if k == 0:
        return gamma, 0.0
    idx = _support(N_STRONG, k, p, stream, config.randomize_support)
    xi = np.zeros(p)
    xi[idx] = stream.standard_normal(k)
    c = scaling_constant(config.mu_x2, config.n, xi, Sigma_x)
    gamma += c * xi
    return gamma, c


def make_gamma_z(config: SimConfig, Sigma_z1: np.ndarray, stream: np.random.Generator) -> tuple[np.ndarray, float]:
    """Excluded-instrument coefficients. ``all_weak`` draws a density_z share
    of N(0,1) signals; ``cutoff`` sets a density_z share of equal coefficients
    (the panels use 0.70). Both are rescaled by the calibration constant to
    signal strength mu_z2. Returns (gamma_z, c)."""
    p = config.p_z1
    if p < 2:
        raise ConfigError(f"instrument pattern needs p_z1 >= 2, got {p}")
    k = _round_half_up(config.density_z * p)
    if k == 0:
        return np.zeros(p), 0.0
    idx = _support(0, k, p, stream, config.randomize_support)
    xi = np.zeros(p)
    if config.gamma_z_pattern == "all_weak":
        xi[idx] = stream.standard_normal(k)
    else:
        xi[idx] = 1.0
    c = scaling_constant(config.mu_z2, config.n, xi, Sigma_z1)
    return c * xi, c


def generate(config: SimConfig, rep: int) -> tuple[Dataset, CoefDraw]:
    """Draw one replication's dataset; a pure function of (config, rep).

    Controls and excluded instruments are a single jointly correlated block
    ordered [Z1, X] (marginals match the per-block correlation matrices);
    the structural errors are bivariate normal with unit variances and
    correlation sigma_ev. The treatment loads only on the excluded
    instruments: d = Z1 gamma_z + v, and y = alpha d + X gamma_x + eps.
    """
    if not 0 <= rep:
        raise ConfigError(f"replication index must be nonnegative, got {rep}")
    n, p_x, p_z1 = config.n, config.p_x, config.p_z1

    rng_block = substream(config.seed, rep, PURPOSE_REGRESSORS)
    if config.independent_blocks:
        Z1 = sample_gaussian_block(corr_matrix(p_z1, config.corr, config.rho), n, rng_block)
        X = (
            sample_gaussian_block(corr_matrix(p_x, config.corr, config.rho), n, rng_block)
            if p_x
            else np.zeros((n, 0))
        )
    else:
        joint = sample_gaussian_block(
            corr_matrix(p_z1 + p_x, config.corr, config.rho), n, rng_block
        )
        Z1, X = joint[:, :p_z1], joint[:, p_z1:]

    Sigma_x = corr_matrix(p_x, config.corr, config.rho) if p_x else np.zeros((0, 0))
    gamma_x, c_x_applied = make_gamma_x(config, Sigma_x, substream(config.seed, rep, PURPOSE_COEF_X))
    gamma_z, c_z_applied = make_gamma_z(
        config, corr_matrix(p_z1, config.corr, config.rho), substream(config.seed, rep, PURPOSE_COEF_Z)
    )

    cov_ev = np.array([[1.0, config.sigma_ev], [config.sigma_ev, 1.0]])
    errors = sample_gaussian_block(cov_ev, n, substream(config.seed, rep, PURPOSE_ERRORS))
    eps = errors[:, 0] * config.noise_scale
    v = errors[:, 1] * config.noise_scale

    d = Z1 @ gamma_z + v
    y = config.alpha_true * d + (X @ gamma_x if p_x else 0.0) + eps
    dataset = Dataset(y=y, d=d, X=X, Z1=Z1)
    return dataset, CoefDraw(
        gamma_x=gamma_x, gamma_z=gamma_z, c_applied_x=c_x_applied, c_applied_z=c_z_applied
    )
