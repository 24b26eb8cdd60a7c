"""
Time-series data model: one multivariate series per individual with per-cell
missingness, CSV ingestion and the preprocessing steps applied before fitting.
"""
import logging
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..core.errors import (
    BinaryDomain,
    DatasetError,
    KindMismatch,
    MalformedHeader,
    MixedKind,
    NonConsecutiveTime,
    NonNumericCell,
    WindowError,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]


class FeatureKind(Enum):
    """Kind shared by every feature of a dataset"""
    BINARY = "binary"
    CONTINUOUS = "continuous"

    @classmethod
    def parse(cls, value: Union[str, "FeatureKind"]) -> "FeatureKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise MixedKind(f"Unknown feature kind {value!r}; expected 'binary' or 'continuous'")


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class IndividualSeries:
    """One individual's T x K observation matrix.

    ``values`` holds NaN wherever ``observed`` is False. ``start`` is the first
    timestep label so the CSV writer reproduces the original ``t`` column.
    """
    id: str
    values: np.ndarray
    observed: np.ndarray
    start: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        observed = np.asarray(self.observed, dtype=bool)
        if values.ndim != 2 or values.shape != observed.shape:
            raise DatasetError(
                f"Series {self.id}: values {values.shape} and mask {observed.shape} must be equal 2-D shapes")
        if values.shape[0] < 1:
            raise DatasetError(f"Series {self.id} has no timesteps")
        if not np.all(np.isfinite(values[observed])):
            raise NonNumericCell(f"Series {self.id} has non-finite observed values")
        values = np.where(observed, values, np.nan)
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "observed", _frozen(observed))

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def K(self) -> int:
        return self.values.shape[1]

    @property
    def n_observed(self) -> int:
        return int(self.observed.sum())

    def any_observed(self) -> np.ndarray:
        """Per-timestep flag: at least one feature was logged"""
        return self.observed.any(axis=1)

    def filled(self, fill: float = 0.0) -> np.ndarray:
        """Values with missing cells replaced by ``fill``"""
        return np.where(self.observed, self.values, fill)

    def equals(self, other: "IndividualSeries", atol: float = 1e-12) -> bool:
        if self.id != other.id or self.start != other.start or self.values.shape != other.values.shape:
            return False
        if not np.array_equal(self.observed, other.observed):
            return False
        return bool(np.allclose(self.filled(), other.filled(), rtol=0.0, atol=atol))


@dataclass(frozen=True, eq=False)
class TimeSeriesDataset:
    """N individuals sharing K features of one kind"""
    series: Tuple[IndividualSeries, ...]
    feature_names: Tuple[str, ...]
    kind: FeatureKind
    _index: Dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        series = tuple(self.series)
        names = tuple(str(name) for name in self.feature_names)
        kind = FeatureKind.parse(self.kind)
        if not series:
            raise DatasetError("Dataset must contain at least one series")
        ids = [s.id for s in series]
        if len(set(ids)) != len(ids):
            raise DatasetError("Series ids must be unique")
        for s in series:
            if s.K != len(names):
                raise DatasetError(f"Series {s.id} has {s.K} features, expected {len(names)}")
        if kind is FeatureKind.BINARY:
            for s in series:
                observed = s.values[s.observed]
                if not np.all((observed == 0.0) | (observed == 1.0)):
                    raise BinaryDomain(f"Series {s.id} has binary values outside {{0, 1}}")
        object.__setattr__(self, "series", series)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "_index", {sid: i for i, sid in enumerate(ids)})

    def __len__(self) -> int:
        return len(self.series)

    def __iter__(self) -> Iterator[IndividualSeries]:
        return iter(self.series)

    def __getitem__(self, key: Union[int, str]) -> IndividualSeries:
        if isinstance(key, str):
            return self.series[self._index[key]]
        return self.series[key]

    @property
    def N(self) -> int:
        return len(self.series)

    @property
    def K(self) -> int:
        return len(self.feature_names)

    @property
    def ids(self) -> List[str]:
        return [s.id for s in self.series]

    def subset(self, indices: Sequence[int]) -> "TimeSeriesDataset":
        """Dataset restricted to the given individual indices, in that order"""
        return TimeSeriesDataset(tuple(self.series[i] for i in indices), self.feature_names, self.kind)

    def replace_series(self, series: Sequence[IndividualSeries]) -> "TimeSeriesDataset":
        return TimeSeriesDataset(tuple(series), self.feature_names, self.kind)

    def stacked(self) -> Tuple[np.ndarray, np.ndarray]:
        """All rows of all individuals stacked: (sum T) x K values and mask"""
        values = np.concatenate([s.values for s in self.series], axis=0)
        observed = np.concatenate([s.observed for s in self.series], axis=0)
        return values, observed

    def summary(self) -> Dict[str, float]:
        _, observed = self.stacked()
        return {
            "N": self.N,
            "K": self.K,
            "kind": self.kind.value,
            "timesteps": int(observed.shape[0]),
            "observations": int(observed.sum()),
            "missing_fraction": float(1.0 - observed.mean()),
        }

    def equals(self, other: "TimeSeriesDataset", atol: float = 1e-12) -> bool:
        return (self.kind is other.kind
                and self.feature_names == other.feature_names
                and self.N == other.N
                and all(a.equals(b, atol) for a, b in zip(self.series, other.series)))

    def to_frame(self) -> pd.DataFrame:
        """Long table in the CSV layout: id, t, <features...>"""
        frames = []
        for s in self.series:
            frame = pd.DataFrame(s.values, columns=list(self.feature_names))
            frame.insert(0, "t", np.arange(s.start, s.start + s.T))
            frame.insert(0, "id", s.id)
            frames.append(frame)
        return pd.concat(frames, ignore_index=True)


def load_csv(path: PathLike, kind: Union[str, FeatureKind]) -> TimeSeriesDataset:
    """Read ``id,t,<feature_1>,...,<feature_K>``; empty cells are missing.

    Raises:
        MalformedHeader, NonNumericCell, NonConsecutiveTime, BinaryDomain
    """
    kind = FeatureKind.parse(kind)
    raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    columns = [c.strip() for c in raw.columns]
    if len(columns) < 3 or columns[0] != "id" or columns[1] != "t":
        raise MalformedHeader(f"Header must be 'id,t,<feature_1>,...'; got {','.join(columns)}")
    feature_names = columns[2:]
    if len(set(feature_names)) != len(feature_names) or any(not name for name in feature_names):
        raise MalformedHeader("Feature names must be unique and nonempty")
    raw.columns = columns

    try:
        t = raw["t"].str.strip().astype(int)
    except ValueError:
        raise NonNumericCell("Column 't' must contain integers")

    cells = raw[feature_names].apply(lambda col: col.str.strip())
    missing = (cells == "").to_numpy()
    numeric = cells.apply(pd.to_numeric, errors="coerce")
    bad = ~missing & ~np.isfinite(numeric.to_numpy(dtype=float))
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise NonNumericCell(f"Non-numeric cell {cells.iat[row, col]!r} at row {row + 2}, column {feature_names[col]}")

    table = pd.concat(
        [pd.DataFrame({"id": raw["id"].astype(str), "t": t}), numeric.where(~missing).astype(float)], axis=1)
    table = table.sort_values(["id", "t"], kind="mergesort")

    series = []
    for sid, group in table.groupby("id", sort=True):
        times = group["t"].to_numpy()
        if np.any(np.diff(times) != 1):
            raise NonConsecutiveTime(f"Timesteps of id {sid} are not consecutive integers")
        values = group[feature_names].to_numpy(dtype=float)
        series.append(IndividualSeries(str(sid), values, ~np.isnan(values), start=int(times[0])))

    if not series:
        raise DatasetError(f"No rows in {path}")
    dataset = TimeSeriesDataset(tuple(series), tuple(feature_names), kind)
    logger.info(f"Loaded {dataset.N} series with {dataset.K} {kind.value} features from {path}")
    return dataset


def write_csv(ds: TimeSeriesDataset, path_or_buffer=None) -> Optional[str]:
    """Write the dataset in the format read by :func:`load_csv`; returns the text when no target is given"""
    return ds.to_frame().to_csv(path_or_buffer, index=False, na_rep="", float_format="%.17g")


def apply_binary_missing_rule(ds: TimeSeriesDataset) -> TimeSeriesDataset:
    """Unlogged features on a day with any log become observed zeros.

    Rows with nothing logged stay fully missing. Idempotent.
    """
    if ds.kind is not FeatureKind.BINARY:
        raise KindMismatch("The binary missing rule applies to binary datasets only")
    series = []
    for s in ds.series:
        logged = s.any_observed()[:, None]
        observed = np.broadcast_to(logged, s.observed.shape)
        values = np.where(s.observed, s.values, 0.0)
        series.append(IndividualSeries(s.id, values, observed, s.start))
    return ds.replace_series(series)


def detrend(ds: TimeSeriesDataset, window: int = 15) -> TimeSeriesDataset:
    """Subtract the centered moving average of observed cells (odd ``window``)"""
    if ds.kind is not FeatureKind.CONTINUOUS:
        raise KindMismatch("Detrending applies to continuous datasets only")
    if window < 3 or window % 2 == 0:
        raise WindowError(f"Window must be an odd integer >= 3, got {window}")
    series = []
    for s in ds.series:
        # rolling mean skips NaN; windows are truncated at both ends, so T < window is fine
        frame = pd.DataFrame(np.where(s.observed, s.values, np.nan))
        means = frame.rolling(window, center=True, min_periods=1).mean().fillna(0.0).to_numpy()
        series.append(IndividualSeries(s.id, s.filled() - means, s.observed, s.start))
    return ds.replace_series(series)


def filter_active(ds: TimeSeriesDataset, min_fraction: float) -> TimeSeriesDataset:
    """Keep individuals who log something on at least ``min_fraction`` of timesteps.

    ``min_fraction=0.5`` keeps users logging at least once every two days.
    """
    if not 0.0 <= min_fraction <= 1.0:
        raise DatasetError(f"min_fraction must lie in [0, 1], got {min_fraction}")
    kept = [i for i, s in enumerate(ds.series) if s.any_observed().mean() >= min_fraction]
    if not kept:
        raise DatasetError(f"No individual logs on at least {min_fraction:.0%} of timesteps")
    logger.info(f"Activity filter kept {len(kept)} of {ds.N} individuals")
    return ds.subset(kept)
