"""Ridge-regularized instrumental-variables estimation and inference for
models with high-dimensional instruments and high-dimensional controls.

The package provides a two-step ridge IV estimator with a sandwich variance
estimator and Wald/CI inference, a ridge-jackknife IV baseline, the
simulation designs used to study them, and a replication harness with a
command-line front end.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .data import (
    Dataset,
    InstrumentBlock,
    SplitIndex,
    build_instrument_block,
    load_dataset_csv,
    split_indices,
)
from .dgp import (
    CoefDraw,
    SimConfig,
    corr_matrix,
    generate,
    make_gamma_x,
    make_gamma_z,
    sample_gaussian_block,
    scaling_constant,
)
from .errors import (
    ConfigError,
    DataError,
    EstimationError,
    RidgeIVError,
    SaturatedFitError,
    WeakIdentificationError,
)
from .mc import (
    MCSummary,
    RepRecord,
    panel_csv,
    panel_text,
    run_panel,
    run_records,
    run_replication,
    summarize,
)
from .ridge import RidgeSpec, residualize, ridge_solve, trace_hat, tune_eta
from .rjive import RjiveConfig, jackknife_fitted, rjive
from .tsrr import (
    EstimateResult,
    confidence_interval,
    estimate_sigma_alpha,
    estimate_sigma_eps,
    first_stage,
    predict_optimal_instrument,
    q_diagnostic,
    second_stage,
    tsrr,
    wald,
)

__all__ = [
    "__version__",
    "Dataset",
    "InstrumentBlock",
    "SplitIndex",
    "build_instrument_block",
    "load_dataset_csv",
    "split_indices",
    "CoefDraw",
    "SimConfig",
    "corr_matrix",
    "generate",
    "make_gamma_x",
    "make_gamma_z",
    "sample_gaussian_block",
    "scaling_constant",
    "ConfigError",
    "DataError",
    "EstimationError",
    "RidgeIVError",
    "SaturatedFitError",
    "WeakIdentificationError",
    "MCSummary",
    "RepRecord",
    "panel_csv",
    "panel_text",
    "run_panel",
    "run_records",
    "run_replication",
    "summarize",
    "RidgeSpec",
    "residualize",
    "ridge_solve",
    "trace_hat",
    "tune_eta",
    "RjiveConfig",
    "jackknife_fitted",
    "rjive",
    "EstimateResult",
    "confidence_interval",
    "estimate_sigma_alpha",
    "estimate_sigma_eps",
    "first_stage",
    "predict_optimal_instrument",
    "q_diagnostic",
    "second_stage",
    "tsrr",
    "wald",
]
