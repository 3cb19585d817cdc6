"""Exception hierarchy shared across the library.

The CLI maps these onto exit codes: ``ConfigError`` -> 2, ``DataError`` -> 3,
``EstimationError`` (and subclasses) -> 4.
"""

from __future__ import annotations


class RidgeIVError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(RidgeIVError):
    """Invalid argument, option, or configuration value."""


class DataError(RidgeIVError):
    """Problem ingesting or constructing a dataset (missing file, bad cell, ...)."""


class EstimationError(RidgeIVError):
    """Numerical failure inside an estimation routine.

    ``stage`` names the pipeline step that failed when the error is raised
    (or re-raised) by an orchestrator.
    """

    def __init__(self, message: str, stage: str | None = None):
        super().__init__(message)
        self.stage = stage


class WeakIdentificationError(EstimationError):
    """Fitted instrument is numerically orthogonal to the treatment."""


class SaturatedFitError(EstimationError):
    """Error-variance denominator 1 - tr(P)/n is too close to zero."""
