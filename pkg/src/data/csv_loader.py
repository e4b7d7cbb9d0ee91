"""
CSV ingestion into numeric Datasets and random train/test partitions
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union
import logging
import math
import os

import numpy as np
import pandas as pd

from src.core.errors import (
    InvalidInputError, UnreadableFileError, MissingColumnError, EmptyDatasetError
)
from src.core.honest_trees import Dataset
from src.core.random_streams import RandomStream, sample_without_replacement

logger = logging.getLogger(__name__)

ColumnRef = Union[str, int]

MISSING_POLICY_DROP_ROW = "drop-row"


@dataclass(frozen=True)
class ColumnSpec:
    """
    Which columns become the response and the features

    feature_columns=None means every column other than the target, in file order.
    Cells that are empty, equal to `missing_sentinel`, or not numeric count as missing.
    """
    target_column: ColumnRef
    feature_columns: Optional[Tuple[ColumnRef, ...]] = None
    missing_policy: str = MISSING_POLICY_DROP_ROW
    missing_sentinel: Optional[str] = None

    def __post_init__(self):
        if self.missing_policy != MISSING_POLICY_DROP_ROW:
            raise InvalidInputError(f"unsupported missing policy '{self.missing_policy}'")


@dataclass
class CsvImport:
    dataset: Dataset
    dropped_rows: int
    dropped_row_numbers: List[int] = field(default_factory=list)


def _resolve(ref: ColumnRef, header: List[str], path: str) -> str:
    if isinstance(ref, int) and not isinstance(ref, bool):
        if not 0 <= ref < len(header):
            raise MissingColumnError(f"column index {ref} out of range in {path} ({len(header)} columns)")
        return header[ref]
    if ref not in header:
        raise MissingColumnError(f"column '{ref}' not found in {path}")
    return ref


def _read_frame(path: str, missing_sentinel: Optional[str]) -> pd.DataFrame:
    na_values = [missing_sentinel] if missing_sentinel is not None else None
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, na_values=na_values, encoding="utf-8")
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        logger.error(f"Cannot read {path}: {e}")
        raise UnreadableFileError(f"cannot read {path}: {e}") from e


def _numeric_rows(frame: pd.DataFrame, columns: List[str], path: str) -> Tuple[pd.DataFrame, np.ndarray]:
    """Parse the columns as reals; returns the retained rows and the dropped row numbers"""
    numeric = frame[columns].apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce"))
    numeric = numeric.where(np.isfinite(numeric))
    keep = numeric.notna().all(axis=1).to_numpy()
    dropped = np.flatnonzero(~keep)
    if dropped.size:
        logger.warning(f"Dropped {dropped.size} of {len(frame)} rows from {path} with missing or non-numeric cells")
    if not keep.any():
        raise EmptyDatasetError(f"no rows of {path} survive missing-value removal")
    return numeric[keep], dropped


def read_csv(path: str, spec: ColumnSpec) -> CsvImport:
    """
    Read a headed, comma-delimited CSV into a Dataset

    Every selected cell is parsed as a decimal real. Rows with a missing or
    non-numeric cell in any selected column are dropped and counted; nothing
    is coerced silently. Row ids are the 0-based data-row numbers in the file.

    Args:
        path: CSV path
        spec: column selection

    Returns:
        CsvImport with the Dataset and drop count
    """
    frame = _read_frame(path, spec.missing_sentinel)
    header = [str(c) for c in frame.columns]
    target = _resolve(spec.target_column, header, path)
    if spec.feature_columns is None:
        features = [c for c in header if c != target]
    else:
        features = [_resolve(ref, header, path) for ref in spec.feature_columns]
    if not features:
        raise MissingColumnError(f"no feature columns selected in {path}")
    if target in features:
        raise InvalidInputError(f"target column '{target}' is also listed as a feature")

    retained, dropped = _numeric_rows(frame, features + [target], path)
    dataset = Dataset(
        features=retained[features].to_numpy(dtype=float),
        response=retained[target].to_numpy(dtype=float),
        row_ids=retained.index.to_numpy(),
        feature_names=features,
    )
    logger.info(f"Loaded {dataset.n} rows x {dataset.p} features from {os.path.basename(path)} (target '{target}')")
    return CsvImport(dataset=dataset, dropped_rows=int(dropped.size), dropped_row_numbers=dropped.tolist())


def read_features(path: str,
                  columns: Sequence[str],
                  missing_sentinel: Optional[str] = None) -> Tuple[np.ndarray, np.ndarray, int]:
    """
    Read query rows for prediction

    Returns:
        (feature matrix in `columns` order, row ids, dropped row count)
    """
    frame = _read_frame(path, missing_sentinel)
    header = [str(c) for c in frame.columns]
    names = [_resolve(c, header, path) for c in columns]
    retained, dropped = _numeric_rows(frame, names, path)
    return retained[names].to_numpy(dtype=float), retained.index.to_numpy(), int(dropped.size)


def train_test_split(data: Dataset,
                     test_fraction: float,
                     stream: RandomStream,
                     test_size: Optional[int] = None) -> Tuple[Dataset, Dataset]:
    """
    Uniformly random partition without replacement

    The test part has test_size rows when given, else floor(n * test_fraction);
    both parts keep the original row order and identities.
    """
    if test_size is not None:
        n_test = int(test_size)
        if n_test < 1 or n_test >= data.n:
            raise InvalidInputError(f"test size must be in [1, {data.n - 1}] for n={data.n}, got {test_size}")
    else:
        if not 0.0 < test_fraction < 1.0:
            raise InvalidInputError(f"test fraction must be in (0, 1), got {test_fraction}")
        n_test = int(math.floor(data.n * test_fraction))
        if n_test < 1 or n_test >= data.n:
            raise InvalidInputError(f"test fraction {test_fraction} leaves an empty part for n={data.n}")

    test_rows = np.sort(sample_without_replacement(stream, data.n, n_test))
    train_rows = np.setdiff1d(np.arange(data.n), test_rows, assume_unique=True)
    return data.subset(train_rows), data.subset(test_rows)
