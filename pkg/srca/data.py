"""Dataset container, CSV ingestion, standardization and train/test splits."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError
from .utils import make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DataMatrix:
    values: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.ndim != 2:
            raise DataError(f"data must be a 2-D matrix, got {values.ndim} dimensions")
        if not np.all(np.isfinite(values)):
            row, col = np.argwhere(~np.isfinite(values))[0]
            raise DataError(f"non-finite value at row {row + 1}, column {col + 1}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.labels is not None:
            labels = np.array(self.labels, dtype=int).ravel()
            if labels.shape[0] != values.shape[0]:
                raise DataError(
                    f"label vector has {labels.shape[0]} entries for {values.shape[0]} rows"
                )
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray) -> "DataMatrix":
        return DataMatrix(values, self.labels)

    def take(self, index: np.ndarray) -> "DataMatrix":
        labels = None if self.labels is None else self.labels[index]
        return DataMatrix(self.values[index], labels)


def load_csv(path, has_header: bool = False, label_column: Optional[int] = None) -> DataMatrix:
    """Read a comma-separated numeric file; an optional column holds class labels.

    Labels are mapped to dense integers 0..k-1 in order of first appearance.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    try:
        raw = pd.read_csv(
            path,
            header=0 if has_header else None,
            dtype=str,
            skip_blank_lines=True,
            skipinitialspace=True,
        )
    except pd.errors.EmptyDataError:
        raise DataError(f"{path} is empty")
    except pd.errors.ParserError as exc:
        raise DataError(f"{path}: ragged rows ({exc})")
    if raw.shape[0] == 0:
        raise DataError(f"{path} has no data rows")

    first_data_line = 2 if has_header else 1
    missing = raw.isna().to_numpy()
    if missing.any():
        row = int(np.argwhere(missing)[0][0])
        raise DataError(f"{path}: ragged row or empty cell at line {row + first_data_line}")

    labels = None
    if label_column is not None:
        if not 0 <= label_column < raw.shape[1]:
            raise ConfigError(
                f"label column {label_column} outside 0..{raw.shape[1] - 1}"
            )
        labels, _ = pd.factorize(raw.iloc[:, label_column], sort=False)
        raw = raw.drop(columns=raw.columns[label_column])
    if raw.shape[1] == 0:
        raise DataError(f"{path} has no numeric columns")

    numeric = raw.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().to_numpy()
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise DataError(
            f"{path}: cannot parse {raw.iat[row, col]!r} at line "
            f"{row + first_data_line}, column {col + 1}"
        )
    logger.debug("loaded %s: %d rows x %d columns", path, *numeric.shape)
    return DataMatrix(numeric.to_numpy(dtype=float), labels)


def write_csv(X: DataMatrix, path, include_labels: bool = False) -> None:
    frame = pd.DataFrame(X.values)
    if include_labels and X.labels is not None:
        frame[frame.shape[1]] = X.labels
    frame.to_csv(path, header=False, index=False, float_format="%.17g")


@dataclass(frozen=True)
class StandardizationRecord:
    mode: Literal["center", "zscore", "none"]
    mean: np.ndarray
    scale: np.ndarray = field(repr=False)

    def apply(self, X: DataMatrix) -> DataMatrix:
        return X.with_values((X.values - self.mean) / self.scale)

    def invert(self, X: DataMatrix) -> DataMatrix:
        return X.with_values(X.values * self.scale + self.mean)


def standardize(X: DataMatrix, mode: str = "center") -> tuple[DataMatrix, StandardizationRecord]:
    if X.rows < 1:
        raise DataError("cannot standardize an empty matrix")
    d = X.cols
    if mode == "none":
        record = StandardizationRecord("none", np.zeros(d), np.ones(d))
    elif mode == "center":
        record = StandardizationRecord("center", X.values.mean(axis=0), np.ones(d))
    elif mode == "zscore":
        if X.rows < 2:
            raise DataError("zscore needs at least two rows")
        scale = X.values.std(axis=0, ddof=1)
        flat = np.flatnonzero(scale <= 0)
        if flat.size:
            raise DataError(f"column {flat[0] + 1} has zero variance; cannot zscore")
        record = StandardizationRecord("zscore", X.values.mean(axis=0), scale)
    else:
        raise ConfigError(f"unknown standardization mode {mode!r}")
    return record.apply(X), record


def split_train_test(
    X: DataMatrix, test_fraction: float, seed: int
) -> tuple[DataMatrix, DataMatrix]:
    if not 0 < test_fraction < 1:
        raise ConfigError(f"test fraction must lie in (0, 1), got {test_fraction}")
    if X.rows < 2:
        raise DataError("need at least two rows to split")
    n_test = min(max(int(round(test_fraction * X.rows)), 1), X.rows - 1)
    order = make_rng(seed).permutation(X.rows)
    test_index = np.sort(order[:n_test])
    train_index = np.sort(order[n_test:])
    return X.take(train_index), X.take(test_index)


def load_labels(path) -> np.ndarray:
    """First column of a headerless CSV as dense integer labels."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    try:
        raw = pd.read_csv(path, header=None, dtype=str, usecols=[0])
    except pd.errors.EmptyDataError:
        raise DataError(f"{path} is empty")
    if raw.iloc[:, 0].isna().any():
        raise DataError(f"{path}: empty label cell")
    labels, _ = pd.factorize(raw.iloc[:, 0], sort=False)
    return labels
