"""Price ingestion and the (t, x) coordinate system.

Raw quotes come in as CSV exports (``Date`` plus ``Adj Close``/``Close``),
are optionally reduced to one quote per calendar week and windowed by date,
and finally mapped to years-since-start ``t`` and log-price ``x``.
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import DuplicateDateError, EmptyInputError, EmptySliceError, FormatError, ParameterError

log = logging.getLogger(__name__)

DAYS_PER_YEAR = 365.25
PRICE_COLUMNS = ("Adj Close", "Close")


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PriceSeries:
    dates: tuple
    prices: np.ndarray
    source: str = ""
    rejected: int = 0

    def __post_init__(self):
        dates = tuple(self.dates)
        prices = _frozen(self.prices)
        if len(dates) != len(prices):
            raise ValueError("dates and prices differ in length")
        if len(dates) < 2:
            raise EmptyInputError(f"price series needs at least 2 rows, got {len(dates)}")
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise ValueError("dates must be strictly increasing")
        if not np.all(np.isfinite(prices)) or np.any(prices <= 0):
            raise ValueError("prices must be finite and strictly positive")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "prices", prices)

    def __len__(self):
        return len(self.dates)

    def __eq__(self, other):
        if not isinstance(other, PriceSeries):
            return NotImplemented
        return self.dates == other.dates and np.array_equal(self.prices, other.prices)


@dataclass(frozen=True, eq=False)
class CoordinateSeries:
    """Time ``t`` in years since the first sample and log-price ``x``."""

    t: np.ndarray
    x: np.ndarray
    origin: Optional[dt.date] = field(default=None, compare=False)

    def __post_init__(self):
        t = _frozen(self.t)
        x = _frozen(self.x)
        if t.ndim != 1 or t.shape != x.shape:
            raise ValueError("t and x must be 1-D arrays of equal length")
        if len(t) < 2:
            raise EmptyInputError("coordinate series needs at least 2 samples")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValueError("t must start at 0 and increase strictly")
        if not np.all(np.isfinite(x)):
            raise ValueError("x must be finite")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)

    def __len__(self):
        return len(self.t)

    @classmethod
    def from_arrays(cls, t, x):
        t = np.asarray(t, dtype=float)
        return cls(t - t[0], x)


Source = Union[str, os.PathLike, io.TextIOBase]


def _read_text(source: Source) -> tuple[str, str]:
    if hasattr(source, "read"):
        return source.read(), getattr(source, "name", "<stream>")
    if isinstance(source, os.PathLike) or (isinstance(source, str) and "\n" not in source):
        path = Path(source)
        return path.read_text(encoding="utf-8-sig"), str(path)
    return source, "<text>"


def _parse_price(raw: str) -> Optional[float]:
    raw = raw.strip()
    if not raw or raw.lower() in ("null", "nan", "na", "n/a"):
        return None
    try:
        value = float(raw)
    except ValueError:
        return None
    if not math.isfinite(value) or value <= 0:
        return None
    return value


def load_price_csv(source: Source, column: Optional[str] = None) -> PriceSeries:
    """Read a historical-quote CSV into a :class:`PriceSeries`.

    Parameters
    ----------
    source:
        A file path, an open text stream, or the CSV text itself (any string
        containing a newline is treated as content).
    column:
        Price column to use. Defaults to ``Adj Close`` when present, else
        ``Close``.

    Rows whose price is missing, unparsable or non-positive are skipped and
    counted in ``PriceSeries.rejected``. Rows are returned sorted by date.

    Raises
    ------
    FormatError
        Header lacks ``Date`` or the price column, or a date does not parse.
    EmptyInputError
        No valid rows remain.
    DuplicateDateError
        The same date appears twice.
    """
    text, label = _read_text(source)
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise FormatError(f"{label}: empty file, expected a header row") from None
    if "Date" not in header:
        raise FormatError(f"{label}: header has no 'Date' column: {header}")
    if column is None:
        column = next((c for c in PRICE_COLUMNS if c in header), None)
        if column is None:
            raise FormatError(f"{label}: header has neither 'Adj Close' nor 'Close': {header}")
    elif column not in header:
        raise FormatError(f"{label}: header has no {column!r} column: {header}")
    i_date, i_price = header.index("Date"), header.index(column)

    rows = {}
    rejected = 0
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) <= max(i_date, i_price):
            raise FormatError(f"{label}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            date = dt.date.fromisoformat(row[i_date].strip()[:10])
        except ValueError:
            raise FormatError(f"{label}:{lineno}: bad date {row[i_date]!r}") from None
        price = _parse_price(row[i_price])
        if price is None:
            rejected += 1
            continue
        if date in rows:
            raise DuplicateDateError(date.isoformat())
        rows[date] = price

    if rejected:
        log.warning("%s: rejected %d rows with missing or non-positive %s", label, rejected, column)
    if not rows:
        raise EmptyInputError(f"{label}: no valid price rows")
    dates = sorted(rows)
    return PriceSeries(tuple(dates), [rows[d] for d in dates], source=label, rejected=rejected)


def resample_weekly(series: PriceSeries) -> PriceSeries:
    """Keep the last available quote of every ISO calendar week."""
    keep = []
    for i, d in enumerate(series.dates):
        week = d.isocalendar()[:2]
        if keep and series.dates[keep[-1]].isocalendar()[:2] == week:
            keep[-1] = i
        else:
            keep.append(i)
    return PriceSeries(
        tuple(series.dates[i] for i in keep),
        series.prices[keep],
        source=series.source,
        rejected=series.rejected,
    )


def slice_by_date(series: PriceSeries, start: dt.date, end: dt.date) -> PriceSeries:
    """Rows with ``start <= date <= end`` (both inclusive)."""
    if start > end:
        raise ParameterError(f"start {start} is after end {end}")
    idx = [i for i, d in enumerate(series.dates) if start <= d <= end]
    if len(idx) < 2:
        raise EmptySliceError(
            f"slice {start.isoformat()}..{end.isoformat()} holds {len(idx)} rows of "
            f"{series.dates[0].isoformat()}..{series.dates[-1].isoformat()}"
        )
    return PriceSeries(
        tuple(series.dates[i] for i in idx), series.prices[idx],
        source=series.source, rejected=series.rejected,
    )


def to_log_coordinates(series: PriceSeries) -> CoordinateSeries:
    d0 = series.dates[0]
    t = np.array([(d - d0).days for d in series.dates], dtype=float) / DAYS_PER_YEAR
    return CoordinateSeries(t, np.log(series.prices), origin=d0)


def write_price_csv(series: PriceSeries, stream, coordinates: bool = True) -> None:
    """Write ``Date,Close[,t,x]`` rows; the output loads back with :func:`load_price_csv`."""
    w = csv.writer(stream, lineterminator="\n")
    coords = to_log_coordinates(series) if coordinates else None
    w.writerow(["Date", "Close", "t", "x"] if coordinates else ["Date", "Close"])
    for i, (d, p) in enumerate(zip(series.dates, series.prices)):
        row = [d.isoformat(), repr(float(p))]
        if coords is not None:
            row += [repr(float(coords.t[i])), repr(float(coords.x[i]))]
        w.writerow(row)


def parse_date(text: Union[str, dt.date]) -> dt.date:
    if isinstance(text, dt.date):
        return text
    return dt.date.fromisoformat(text)

