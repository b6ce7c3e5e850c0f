"""Dataset ingestion, synthetic benchmark generation and error metrics."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, IngestError


@dataclass
class Dataset:
    """Feature matrix normalized to [0, 1]^d plus labels in original units."""

    X: np.ndarray
    y: np.ndarray
    feature_names: list[str]
    bounds: np.ndarray  # (d, 2) per-feature raw min/max
    label_name: str = "label"

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.X.ndim != 2 or len(self.X) != len(self.y):
            raise IngestError("X must be (n, d) with one label per row")
        if len(self.X) < 2:
            raise IngestError("need at least 2 rows")
        if self.X.min() < -1e-12 or self.X.max() > 1 + 1e-12:
            raise IngestError("features must lie in [0, 1] after normalization")

    @property
    def n(self) -> int:
        return len(self.X)

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def denormalize(self) -> np.ndarray:
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        return self.X * (hi - lo) + lo

    def subset(self, rows) -> "Dataset":
        return Dataset(self.X[rows], self.y[rows], self.feature_names, self.bounds, self.label_name)


def _parse_column(values: list[str], name: str, col_rows: list[int]):
    """Parse one raw CSV column: floats, or integer codes for categoricals."""
    parsed = np.empty(len(values))
    bad_rows = []
    numeric = 0
    for i, v in enumerate(values):
        try:
            parsed[i] = float(v)
            numeric += 1
        except ValueError:
            bad_rows.append(col_rows[i])
            parsed[i] = np.nan
    if numeric == len(values):
        return parsed
    if numeric == 0:
        # a fully non-numeric column is categorical: integer-code its levels
        levels = sorted(set(values))
        codes = {v: float(i) for i, v in enumerate(levels)}
        return np.array([codes[v] for v in values])
    shown = ", ".join(map(str, bad_rows[:10]))
    more = "" if len(bad_rows) <= 10 else f" (+{len(bad_rows) - 10} more)"
    raise IngestError(f"non-numeric cells in column {name!r} at data rows {shown}{more}")


def ingest_csv(path, label_column: str | None = None, normalize: bool = True) -> Dataset:
    """Load a headed CSV into a min-max normalized dataset.

    The label column is selected by name or defaults to the last column.
    Fully non-numeric columns are treated as categoricals and integer-coded
    before normalization; mixed columns are rejected with row numbers.
    Constant features normalize to 0.5 with a warning.
    """
    path = Path(path)
    if not path.exists():
        raise IngestError(f"missing file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"empty CSV: {path}") from None
        rows = [row for row in reader if row and any(cell.strip() for cell in row)]
    header = [h.strip() for h in header]
    if label_column is None:
        label_idx = len(header) - 1
    else:
        if label_column not in header:
            raise IngestError(f"label column {label_column!r} not in header {header}")
        label_idx = header.index(label_column)
    width = len(header)
    for i, row in enumerate(rows):
        if len(row) != width:
            raise IngestError(f"row {i + 1} has {len(row)} cells, expected {width}")
    row_numbers = list(range(1, len(rows) + 1))
    columns = []
    for j, name in enumerate(header):
        raw = [row[j].strip() for row in rows]
        if j == label_idx:
            try:
                col = np.array([float(v) for v in raw])
            except ValueError:
                raise IngestError(f"label column {name!r} must be numeric") from None
        else:
            col = _parse_column(raw, name, row_numbers)
        columns.append(col)
    y = columns[label_idx]
    feat_cols = [c for j, c in enumerate(columns) if j != label_idx]
    feature_names = [h for j, h in enumerate(header) if j != label_idx]
    X = np.column_stack(feat_cols) if feat_cols else np.empty((len(rows), 0))
    bounds = np.stack([X.min(axis=0), X.max(axis=0)], axis=1)
    if normalize:
        span = bounds[:, 1] - bounds[:, 0]
        constant = span <= 0
        if constant.any():
            names = [feature_names[k] for k in np.flatnonzero(constant)]
            warnings.warn(f"constant feature(s) {names} normalized to 0.5", stacklevel=2)
        safe = np.where(constant, 1.0, span)
        X = (X - bounds[:, 0]) / safe
        X[:, constant] = 0.5
    else:
        bounds = np.stack([np.zeros(X.shape[1]), np.ones(X.shape[1])], axis=1)
        if X.size and (X.min() < 0 or X.max() > 1):
            raise IngestError("normalize=False requires features already in [0, 1]")
    return Dataset(X, y, feature_names, bounds, header[label_idx])


def friedman_function(X: np.ndarray) -> np.ndarray:
    """The benchmark surface 10 sin(pi x1 x2) + 20 (x3 - 1/2)^2 + 10 x4 + 5 x5."""
    X = np.asarray(X, dtype=float)
    return (
        10.0 * np.sin(np.pi * X[:, 0] * X[:, 1])
        + 20.0 * (X[:, 2] - 0.5) ** 2
        + 10.0 * X[:, 3]
        + 5.0 * X[:, 4]
    )


def friedman_generate(n: int, d: int = 10, sigma: float = 1.0, seed: int = 0):
    """Uniform features plus the noisy benchmark response.

    Returns (dataset, f) where f is the noiseless surface for oracle
    evaluation.  Requires d >= 5 (only the first five dimensions matter).
    """
    if d < 5:
        raise ConfigError(f"friedman function needs d >= 5, got {d}")
    if sigma < 0:
        raise ConfigError(f"noise level must be >= 0, got {sigma}")
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, d))
    f = friedman_function(X)
    y = f + rng.normal(0.0, sigma, size=n)
    bounds = np.stack([np.zeros(d), np.ones(d)], axis=1)
    names = [f"x{j + 1}" for j in range(d)]
    return Dataset(X, y, names, bounds, "y"), f


def rmae(y_true, y_pred, variant: str = "sqrt-mae") -> float:
    """Root mean absolute error: sqrt((1/n) sum |y - yhat|), original units.

    ``variant="mae"`` reports the plain mean absolute error instead.
    """
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape or y_true.ndim != 1 or len(y_true) < 1:
        raise ConfigError("rmae needs two equal-length non-empty vectors")
    mae = float(np.abs(y_true - y_pred).mean())
    if variant == "mae":
        return mae
    if variant != "sqrt-mae":
        raise ConfigError(f"unknown rmae variant {variant!r}")
    return math.sqrt(mae)
