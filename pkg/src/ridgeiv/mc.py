"""Replication harness: run (DGP -> estimator -> inference) many times and
aggregate the panel statistics bias / bias of variance / MSE / coverage /
CI length / time.

"Bias (Var.)" is the mean over replications of the estimated variance of the
point estimate (sigma_alpha2 / n2) minus the empirical across-replication
variance of the point estimates (population convention, divide by R). Failed
replications are excluded from all statistics and surfaced via ``n_failed``.

Replications are independent tasks keyed by their index; parallel runs
accumulate into per-replication slots before reducing, so every statistic
except wall time is invariant to worker count and scheduling.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import split_indices
from .dgp import SimConfig, generate, split_seed
from .errors import ConfigError, EstimationError
from .ridge import RidgeSpec, tune_eta
from .rjive import RjiveConfig, rjive
from .tsrr import tsrr

LEVEL = 0.95  # nominal coverage used throughout the harness

ESTIMATORS = ("TSRR", "RJIVE")


@dataclass(frozen=True)
class RepRecord:
    """One replication's estimate, interval, coverage flag, and timing.

    ``error`` is None for successful replications; failed ones carry the
    diagnostic string and NaN statistics.
    """

    rep: int
    alpha_hat: float
    sigma_alpha2: float
    ci_low: float
    ci_high: float
    covered: bool
    elapsed_s: float
    estimator: str
    n1: int
    n2: int
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class MCSummary:
    """Aggregated panel statistics over the successful replications."""

    bias: float
    bias_var: float
    mse: float
    p_cover: float
    length: float
    time_s: float
    n_reps_used: int
    n_failed: int


def _estimate_once(config: SimConfig, estimator: str, dataset, split):
    if estimator == "TSRR":
        spec = RidgeSpec(c_x=config.c_x, c_z=config.c_z)
        return tsrr(dataset, spec, split, r=config.alpha_true, level=LEVEL)
    if estimator == "RJIVE":
        eta_x = tune_eta(dataset.X, dataset.y, config.c_x) if dataset.p_x else 0.0
        S = (
            np.column_stack([dataset.d, dataset.X])
            if dataset.p_x
            else dataset.d[:, None]
        )
        eta_s = tune_eta(S, dataset.y, config.c_x)
        cfg = RjiveConfig(lam=None, eta_x=eta_x, partial_controls=True, eta_s=eta_s)
        return rjive(dataset, cfg, r=config.alpha_true, level=LEVEL)
    raise ConfigError(f"unknown estimator {estimator!r}; expected one of {ESTIMATORS}")


def run_replication(config: SimConfig, estimator: str, rep: int) -> RepRecord:
    """Generate replication ``rep``, estimate, and test at r = alpha_true.

    Estimation failures are captured as failed records rather than raised;
    the elapsed time covers the estimator call only.
    """
    if not 0 <= rep < config.n_reps:
        raise ConfigError(f"rep must be in [0, {config.n_reps}), got {rep}")
    if estimator not in ESTIMATORS:
        raise ConfigError(f"unknown estimator {estimator!r}; expected one of {ESTIMATORS}")
    dataset, _ = generate(config, rep)
    split = split_indices(config.n, config.split_fraction, split_seed(config.seed, rep))

    start = time.perf_counter()
    try:
        result = _estimate_once(config, estimator, dataset, split)
    except EstimationError as exc:
        elapsed = time.perf_counter() - start
        return RepRecord(
            rep=rep,
            alpha_hat=math.nan,
            sigma_alpha2=math.nan,
            ci_low=math.nan,
            ci_high=math.nan,
            covered=False,
            elapsed_s=elapsed,
            estimator=estimator,
            n1=split.n1,
            n2=split.n2,
            error=str(exc),
        )
    elapsed = time.perf_counter() - start
    return RepRecord(
        rep=rep,
        alpha_hat=result.alpha_hat,
        sigma_alpha2=result.sigma_alpha2,
        ci_low=result.ci_low,
        ci_high=result.ci_high,
        covered=bool(result.ci_low <= config.alpha_true <= result.ci_high),
        elapsed_s=elapsed,
        estimator=estimator,
        n1=result.n1,
        n2=result.n2,
    )


def summarize(records: list[RepRecord], alpha_true: float) -> MCSummary:
    """Reduce replication records to the panel statistics."""
    used = [rec for rec in records if not rec.failed]
    n_failed = len(records) - len(used)
    if not used:
        raise EstimationError("summarize: no successful replications")
    alpha = np.array([rec.alpha_hat for rec in used])
    est_var = np.array([rec.sigma_alpha2 / (rec.n1 + rec.n2) for rec in used])
    lengths = np.array([rec.ci_high - rec.ci_low for rec in used])
    bias = float(np.mean(alpha)) - alpha_true
    return MCSummary(
        bias=bias,
        bias_var=float(np.mean(est_var) - np.var(alpha)),
        mse=float(np.mean((alpha - alpha_true) ** 2)),
        p_cover=float(np.mean([rec.covered for rec in used])),
        length=float(np.mean(lengths)),
        time_s=float(np.mean([rec.elapsed_s for rec in used])),
        n_reps_used=len(used),
        n_failed=n_failed,
    )


def _replication_task(args: tuple[SimConfig, str, int]) -> RepRecord:
    config, estimator, rep = args
    return run_replication(config, estimator, rep)


def run_records(config: SimConfig, estimator: str, threads: int = 1) -> list[RepRecord]:
    """All replication records for one estimator, in replication order."""
    reps = range(config.n_reps)
    if threads <= 1:
        records = [run_replication(config, estimator, rep) for rep in reps]
    else:
        slots: list[RepRecord | None] = [None] * config.n_reps
        tasks = [(config, estimator, rep) for rep in reps]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunk = max(1, config.n_reps // (8 * threads))
            for record in pool.map(_replication_task, tasks, chunksize=chunk):
                slots[record.rep] = record
        records = [rec for rec in slots if rec is not None]
        if len(records) != config.n_reps:
            raise EstimationError("run_records: lost replications in the worker pool")
    return records


def run_panel(
    config: SimConfig, estimators: tuple[str, ...] = ESTIMATORS, threads: int = 1
) -> dict[str, MCSummary]:
    """Run every replication for each estimator and summarize.

    Raises if more than 20% of an estimator's replications fail.
    """
    summaries: dict[str, MCSummary] = {}
    for estimator in estimators:
        records = run_records(config, estimator, threads=threads)
        n_failed = sum(rec.failed for rec in records)
        if n_failed > 0.2 * len(records):
            raise EstimationError(
                f"panel {estimator}: {n_failed}/{len(records)} replications failed"
            )
        summaries[estimator] = summarize(records, config.alpha_true)
    return summaries


CSV_HEADER = "estimator,bias,bias_var,mse,p_cover,length,time_s,n_failed"


def panel_csv(summaries: dict[str, MCSummary]) -> str:
    """Panel statistics as CSV; deterministic except for the time column."""
    lines = [CSV_HEADER]
    for name, s in summaries.items():
        lines.append(
            f"{name},{s.bias:.12g},{s.bias_var:.12g},{s.mse:.12g},"
            f"{s.p_cover:.12g},{s.length:.12g},{s.time_s:.12g},{s.n_failed}"
        )
    return "\n".join(lines) + "\n"


def panel_text(summaries: dict[str, MCSummary], title: str = "") -> str:
    """Aligned plain-text panel table in the layout of the reported tables."""
    header = f"{'':<8}{'Bias':>10}{'Bias (Var.)':>13}{'MSE':>10}{'P-Cover':>10}{'Length':>10}{'Time':>10}"
    rows = [header, "-" * len(header)]
    for name, s in summaries.items():
        rows.append(
            f"{name:<8}{s.bias:>10.4f}{s.bias_var:>13.4f}{s.mse:>10.4f}"
            f"{s.p_cover:>10.4f}{s.length:>10.4f}{s.time_s:>10.4f}"
        )
    note = (
        "Bias (Var.) = mean estimated variance of the point estimate minus its "
        "across-replication variance."
    )
    body = "\n".join(rows)
    if title:
        body = title + "\n" + body
    return body + "\n" + note + "\n"
