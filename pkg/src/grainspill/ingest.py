"""CSV loading, mixed-frequency alignment and log returns."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

FREQUENCIES = ("daily", "monthly", "annual")


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class TimeSeriesFrame:
    """Named series on one strictly increasing date index."""

    data: pd.DataFrame
    frequencies: dict = field(default_factory=dict)

    def __post_init__(self):
        idx = self.data.index
        if not isinstance(idx, pd.DatetimeIndex):
            raise DataError("TimeSeriesFrame requires a DatetimeIndex")
        if not idx.is_monotonic_increasing or idx.has_duplicates:
            raise DataError("dates must be strictly increasing")
        for name in self.data.columns:
            self.frequencies.setdefault(name, "daily")

    @property
    def dates(self) -> pd.DatetimeIndex:
        return self.data.index

    @property
    def names(self) -> list:
        return list(self.data.columns)

    def series(self, name) -> np.ndarray:
        return self.data[name].to_numpy(dtype=float, copy=True)

    def __len__(self):
        return len(self.data)


@dataclass(frozen=True)
class ReturnSeries:
    dates: pd.DatetimeIndex | None
    values: np.ndarray


def load_csv(path, date_column=None, value_columns=None, frequency="daily") -> TimeSeriesFrame:
    """Read a header-first CSV whose date column holds ISO-8601 dates.

    Empty cells are kept as missing values; any other non-numeric cell is
    an error that names its line and column.
    """
    if frequency not in FREQUENCIES:
        raise DataError(f"unknown frequency {frequency!r}; expected one of {FREQUENCIES}")
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise DataError(f"{path}: file is empty") from None
    if raw.shape[1] == 0 or raw.shape[0] == 0:
        raise DataError(f"{path}: file has no data rows")
    date_column = date_column or raw.columns[0]
    if date_column not in raw.columns:
        raise DataError(f"{path}: no date column {date_column!r}")
    if value_columns is None:
        value_columns = [c for c in raw.columns if c != date_column]
    missing = [c for c in value_columns if c not in raw.columns]
    if missing:
        raise DataError(f"{path}: missing columns {missing}")

    dates = pd.to_datetime(raw[date_column].str.strip(), format="ISO8601", errors="coerce")
    bad = np.flatnonzero(dates.isna().to_numpy())
    if bad.size:
        i = bad[0]
        raise DataError(f"{path}: line {i + 2}, column {date_column!r}: cannot parse date {raw[date_column].iloc[i]!r}")
    dup = dates[dates.duplicated()]
    if len(dup):
        raise DataError(f"{path}: duplicate date {dup.iloc[0].date().isoformat()}")

    values = {}
    for col in value_columns:
        text = raw[col].str.strip()
        num = pd.to_numeric(text.where(text != ""), errors="coerce")
        bad = np.flatnonzero(num.isna().to_numpy() & (text != "").to_numpy())
        if bad.size:
            i = bad[0]
            raise DataError(f"{path}: line {i + 2}, column {col!r}: cannot parse value {raw[col].iloc[i]!r}")
        values[col] = num.to_numpy(dtype=float)

    frame = pd.DataFrame(values, index=pd.DatetimeIndex(dates, name="date"))
    frame = frame.sort_index()
    return TimeSeriesFrame(frame, {c: frequency for c in value_columns})


def _ffill_interior(frame: pd.DataFrame) -> pd.DataFrame:
    gaps = frame.isna() & frame.ffill().notna()
    for name in frame.columns[gaps.any().to_numpy()]:
        logger.warning("forward-filling %d interior missing values in %s", int(gaps[name].sum()), name)
    return frame.ffill()


def price_calendar(frames) -> pd.DatetimeIndex:
    """Intersection of the date indexes of the daily frames."""
    daily = [f for f in frames if all(f.frequencies[c] == "daily" for c in f.names)]
    if not daily:
        raise DataError("no daily frame to define the calendar")
    cal = daily[0].dates
    for f in daily[1:]:
        cal = cal.intersection(f.dates)
    return cal


def align_forward_fill(frames, target_calendar=None) -> TimeSeriesFrame:
    """Carry every series forward onto the target calendar.

    The result starts at the latest first-observation date across series,
    so no value is undefined.
    """
    frames = list(frames)
    if target_calendar is None:
        target_calendar = price_calendar(frames)
    target = pd.DatetimeIndex(target_calendar).sort_values()
    if len(target) == 0:
        raise DataError("target calendar is empty")
    columns, freqs = {}, {}
    for f in frames:
        for name in f.names:
            if name in columns:
                raise DataError(f"series {name!r} appears in more than one frame")
            s = _ffill_interior(f.data[[name]])[name]
            union = s.index.union(target)
            filled = s.reindex(union).ffill().reindex(target)
            if filled.isna().all():
                raise DataError(f"series {name!r} has no observations inside the target span")
            columns[name] = filled
            freqs[name] = f.frequencies[name]
    joint = pd.DataFrame(columns, index=target)
    first_valid = max(joint[c].first_valid_index() for c in joint.columns)
    joint = joint.loc[first_valid:]
    joint.index.name = "date"
    return TimeSeriesFrame(joint, freqs)


def log_returns(prices, dates=None) -> ReturnSeries:
    """Percent log returns ``100 * (ln P[t+1] - ln P[t])``."""
    if isinstance(prices, pd.Series):
        dates = prices.index if dates is None else dates
        prices = prices.to_numpy(dtype=float)
    p = np.asarray(prices, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise DataError("need a 1-D price vector with at least two observations")
    if not np.all(p > 0):
        i = int(np.flatnonzero(~(p > 0))[0])
        raise DataError(f"nonpositive price {p[i]!r} at position {i}")
    values = 100.0 * np.diff(np.log(p))
    if dates is not None:
        dates = pd.DatetimeIndex(dates)[1:]
    return ReturnSeries(dates, values)


def frame_returns(frame: TimeSeriesFrame, names=None) -> pd.DataFrame:
    names = names or frame.names
    out = {}
    for name in names:
        r = log_returns(frame.data[name])
        out[name] = r.values
    return pd.DataFrame(out, index=frame.dates[1:])
