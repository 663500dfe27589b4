"""Occupancy histogram of log-price and its amplitude ``A = sqrt(P)``."""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ParameterError, ZeroRangeError
from .market_data import CoordinateSeries

log = logging.getLogger(__name__)

DEFAULT_BINS = 19
DEFAULT_FLOOR = 1e-4


@dataclass(frozen=True, eq=False)
class DensityGrid:
    """Normalized density on a uniform grid of bin centers.

    ``floor`` is ``None`` until :func:`amplitude` regularizes ``A``; after
    that ``A**2`` equals ``max(P, floor * max(P))`` while ``P`` itself keeps
    its normalization. ``dropped`` counts samples outside an explicit range.
    """

    x: np.ndarray
    dx: float
    counts: np.ndarray
    P: np.ndarray
    A: np.ndarray
    floor: Optional[float] = None
    dropped: int = 0

    def __post_init__(self):
        for name in ("x", "counts", "P", "A"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return len(self.x)

    @property
    def edges(self) -> np.ndarray:
        return np.concatenate([self.x - 0.5 * self.dx, [self.x[-1] + 0.5 * self.dx]])

    def write_csv(self, stream) -> None:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["x", "counts", "P", "A"])
        for row in zip(self.x, self.counts, self.P, self.A):
            w.writerow([repr(float(row[0])), int(row[1]), repr(float(row[2])), repr(float(row[3]))])


def from_values(x, P, counts=None) -> DensityGrid:
    """Wrap an explicit density given on uniform grid points ``x``.

    ``P`` is renormalized so that ``sum(P) * dx == 1``. Used for analytic
    densities and for density files written by :meth:`DensityGrid.write_csv`.
    """
    x = np.asarray(x, dtype=float)
    P = np.asarray(P, dtype=float)
    if x.ndim != 1 or x.shape != P.shape or len(x) < 3:
        raise ParameterError("need matching 1-D x and P with at least 3 points")
    dx = float((x[-1] - x[0]) / (len(x) - 1))
    if dx <= 0 or np.max(np.abs(np.diff(x) - dx)) > 1e-9:
        raise ParameterError("grid must be uniform and increasing")
    if np.any(P < 0) or not np.all(np.isfinite(P)):
        raise ParameterError("density must be finite and non-negative")
    P = P / (P.sum() * dx)
    if counts is None:
        counts = np.zeros(len(x), dtype=int)
    return DensityGrid(x=x, dx=dx, counts=np.asarray(counts, dtype=int), P=P, A=np.sqrt(P))


def read_density_csv(source) -> DensityGrid:
    """Load ``x`` and ``P`` (optionally ``counts``) columns from a CSV file."""
    with open(source, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "x" not in rows[0] or "P" not in rows[0]:
        raise ParameterError(f"{source}: density CSV needs 'x' and 'P' columns")
    x = [float(r["x"]) for r in rows]
    P = [float(r["P"]) for r in rows]
    counts = [int(float(r["counts"])) for r in rows] if "counts" in rows[0] else None
    return from_values(x, P, counts)


def build_density(series: Union[CoordinateSeries, Sequence[float], np.ndarray],
                  bins: int = DEFAULT_BINS,
                  range: Optional[tuple] = None) -> DensityGrid:
    """Count samples of ``x`` per equal-width box and normalize to a density.

    Bins are right-open except the last, which is closed. With an explicit
    ``range`` samples outside it are dropped (and counted in ``dropped``);
    ``P`` is normalized over the samples kept.
    """
    x = np.asarray(series.x if isinstance(series, CoordinateSeries) else series, dtype=float)
    if len(x) < bins:
        raise ParameterError(f"{len(x)} samples cannot fill {bins} bins")
    return histogram(x, bins, range)


def histogram(x, bins: int = DEFAULT_BINS, range: Optional[tuple] = None) -> DensityGrid:
    """:func:`build_density` without the minimum sample count (ensemble cross-sections)."""
    x = np.asarray(x, dtype=float)
    if bins < 3:
        raise ParameterError(f"bins must be >= 3, got {bins}")
    if len(x) < 10 * bins:
        warnings.warn(f"only {len(x)} samples for {bins} bins; histogram will be noisy", stacklevel=3)
    lo, hi = (float(x.min()), float(x.max())) if range is None else map(float, range)
    if not hi > lo:
        raise ZeroRangeError(f"zero-width range [{lo}, {hi}]; all samples identical?")

    counts, edges = np.histogram(x, bins=bins, range=(lo, hi))
    dx = (hi - lo) / bins
    kept = int(counts.sum())
    dropped = len(x) - kept
    if dropped:
        log.info("dropped %d of %d samples outside [%g, %g]", dropped, len(x), lo, hi)
    if kept == 0:
        raise ZeroRangeError(f"no samples inside [{lo}, {hi}]")
    centers = lo + dx * (np.arange(bins) + 0.5)
    P = counts / (kept * dx)
    return DensityGrid(x=centers, dx=dx, counts=counts, P=P, A=np.sqrt(P), dropped=dropped)


def amplitude(grid: DensityGrid, floor: float = DEFAULT_FLOOR) -> DensityGrid:
    """Copy of ``grid`` with ``A = sqrt(max(P, floor * max(P)))``."""
    if floor < 0:
        raise ParameterError("floor must be >= 0")
    floored = np.maximum(grid.P, floor * grid.P.max())
    return replace(grid, A=np.sqrt(floored), floor=floor)
