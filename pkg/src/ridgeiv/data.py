"""Core data records, instrument-block assembly, sample splitting, CSV ingestion.

All records are immutable once constructed (array buffers are marked
read-only), so they can be shared freely across threads and processes.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError


def _as_readonly(a: np.ndarray, ndim: int, name: str) -> np.ndarray:
    out = np.array(a, dtype=np.float64)
    if out.ndim != ndim:
        raise DataError(f"{name} must be {ndim}-dimensional, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise DataError(f"{name} contains non-finite entries")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Dataset:
    """Outcome, scalar endogenous treatment, exogenous controls, excluded instruments.

    ``X`` may have zero columns (no controls); estimation requires at least
    one excluded-instrument column in ``Z1``.
    """

    y: np.ndarray
    d: np.ndarray
    X: np.ndarray
    Z1: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y", _as_readonly(self.y, 1, "y"))
        object.__setattr__(self, "d", _as_readonly(self.d, 1, "d"))
        object.__setattr__(self, "X", _as_readonly(self.X, 2, "X"))
        object.__setattr__(self, "Z1", _as_readonly(self.Z1, 2, "Z1"))
        n = self.y.shape[0]
        if n < 2:
            raise DataError(f"need at least 2 observations, got {n}")
        for name in ("d", "X", "Z1"):
            block = getattr(self, name)
            if block.shape[0] != n:
                raise DataError(
                    f"row count mismatch: y has {n} rows, {name} has {block.shape[0]}"
                )

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p_x(self) -> int:
        return self.X.shape[1]

    @property
    def p_z1(self) -> int:
        return self.Z1.shape[1]


@dataclass(frozen=True)
class InstrumentBlock:
    """Full instrument matrix Z = [Z1 | X] used in the first stage."""

    Z: np.ndarray
    p_z1: int

    @property
    def p_z(self) -> int:
        return self.Z.shape[1]


def build_instrument_block(dataset: Dataset) -> InstrumentBlock:
    """Concatenate excluded instruments and controls into Z = [Z1 | X]."""
    Z = np.hstack([dataset.Z1, dataset.X])
    Z.setflags(write=False)
    return InstrumentBlock(Z=Z, p_z1=dataset.p_z1)


@dataclass(frozen=True)
class SplitIndex:
    """Deterministic two-way partition of row indices 0..n-1.

    Indices within each part are in ascending original order, so estimation
    results are stable under permutations of the generating shuffle.
    """

    part1: np.ndarray
    part2: np.ndarray
    seed: int

    def __post_init__(self):
        p1 = np.array(self.part1, dtype=np.intp)
        p2 = np.array(self.part2, dtype=np.intp)
        p1.setflags(write=False)
        p2.setflags(write=False)
        object.__setattr__(self, "part1", p1)
        object.__setattr__(self, "part2", p2)
        n = p1.size + p2.size
        merged = np.sort(np.concatenate([p1, p2]))
        if not np.array_equal(merged, np.arange(n)):
            raise ConfigError("part1 and part2 must partition 0..n-1 exactly")
        if p1.size < 1 or p2.size < 2:
            raise ConfigError(
                f"degenerate split sizes n1={p1.size}, n2={p2.size} (need n1>=1, n2>=2)"
            )

    @property
    def n(self) -> int:
        return self.part1.size + self.part2.size

    @property
    def n1(self) -> int:
        return self.part1.size

    @property
    def n2(self) -> int:
        return self.part2.size


def split_indices(n: int, fraction: float, seed: int) -> SplitIndex:
    """Draw a uniformly random two-way partition, deterministic in (n, fraction, seed).

    ``fraction`` is the share of rows assigned to part 1; the part-1 size is
    round(fraction*n) with half-up rounding. Realized as a seeded shuffle of
    0..n-1 followed by a prefix/suffix cut.
    """
    if not (0.0 < fraction < 1.0):
        raise ConfigError(f"split fraction must be in (0,1), got {fraction}")
    if n < 3:
        raise ConfigError(f"need n >= 3 to split, got {n}")
    n1 = int(math.floor(fraction * n + 0.5))
    if not (1 <= n1 <= n - 2):
        raise ConfigError(
            f"split of n={n} at fraction={fraction} gives n1={n1}; need 1 <= n1 <= n-2"
        )
    perm = np.random.default_rng(seed).permutation(n)
    return SplitIndex(
        part1=np.sort(perm[:n1]),
        part2=np.sort(perm[n1:]),
        seed=seed,
    )


_SCHEMA_KEYS = ("y", "d", "X", "Z1")


def load_dataset_csv(path: str | os.PathLike, schema: dict) -> Dataset:
    """Read a Dataset from a comma-separated file with a header row.

    ``schema`` maps roles to column names: ``{"y": str, "d": str,
    "X": [str, ...], "Z1": [str, ...]}``. Cells must parse as finite floats
    (scientific notation accepted); the first offending cell is reported with
    its data row number (1-based) and column name.
    """
    for key in _SCHEMA_KEYS:
        if key not in schema:
            raise ConfigError(f"schema is missing required key {key!r}")
    y_col, d_col = schema["y"], schema["d"]
    x_cols, z_cols = list(schema["X"]), list(schema["Z1"])
    wanted = [y_col, d_col] + x_cols + z_cols
    if len(set(wanted)) != len(wanted):
        raise ConfigError(f"schema assigns some column to more than one role: {wanted}")

    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        for name in wanted:
            hits = header.count(name)
            if hits == 0:
                raise DataError(f"{path}: column {name!r} not found in header")
            if hits > 1:
                raise DataError(f"{path}: column {name!r} appears {hits} times in header")
        pos = {name: header.index(name) for name in wanted}

        rows: list[list[float]] = []
        for rownum, record in enumerate(reader, start=1):
            if len(record) != len(header):
                raise DataError(
                    f"{path}: row {rownum} has {len(record)} fields, header has {len(header)}"
                )
            parsed = []
            for name in wanted:
                cell = record[pos[name]].strip()
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric value {cell!r} at row {rownum}, column {name}"
                    ) from None
                if not math.isfinite(value):
                    raise DataError(
                        f"{path}: non-finite value {cell!r} at row {rownum}, column {name}"
                    )
                parsed.append(value)
            rows.append(parsed)

    if not rows:
        raise DataError(f"{path}: no data rows")
    table = np.asarray(rows, dtype=np.float64)
    n_x = len(x_cols)
    return Dataset(
        y=table[:, 0],
        d=table[:, 1],
        X=table[:, 2 : 2 + n_x],
        Z1=table[:, 2 + n_x :],
    )
