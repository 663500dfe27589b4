"""Hurst exponent, diffusion coefficient and their rolling estimates.

All estimators work on log-price increments ``xi = x[i+k] - x[i]`` of a
uniformly sampled :class:`~qfin.market_data.CoordinateSeries`. The Hurst
exponent is the log-log slope of ``std(xi)`` against horizon, and the
diffusion coefficient is the raw second moment of one-step increments
divided by ``2 * tau`` (``tau`` in years).
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import InsufficientDataError, ParameterError, SamplingError
from .market_data import CoordinateSeries

log = logging.getLogger(__name__)

DEFAULT_LAGS = (1, 2, 4, 8, 16)
# max |dt - median dt| / median dt tolerated by returns_at_horizon; a weekly
# series spanning a closed-market week (Sept 2001: 11 days) reaches 0.571
SAMPLING_TOLERANCE = 0.75


class ZeroDiffusionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ReturnSample:
    k: int
    tau: float
    values: np.ndarray
    mean: float
    std: float


@dataclass(frozen=True)
class ScalingReport:
    lags: tuple
    H: float
    D: float
    slope: float
    intercept: float
    r2: float
    diffusion: float
    epsilon_tau: float
    degenerate: bool
    zero_diffusion: bool
    mass: float = 1.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lags"] = list(self.lags)
        return d


@dataclass(frozen=True)
class DiffusionSeries:
    t: np.ndarray
    diffusion: np.ndarray
    mean: float
    delta: np.ndarray
    window: int
    step: int

    def rows(self):
        for t, d, dd in zip(self.t, self.diffusion, self.delta):
            yield float(t), float(d), float(dd)


def sampling_step(series: CoordinateSeries) -> float:
    """Median sampling interval in years; raises if sampling is irregular."""
    dt = np.diff(series.t)
    med = float(np.median(dt))
    spread = float(np.max(np.abs(dt - med))) / med
    if spread >= SAMPLING_TOLERANCE:
        raise SamplingError(
            f"non-uniform sampling (max |dt - median| / median = {spread:.3g}); "
            "resample with resample_weekly first"
        )
    return med


def returns_at_horizon(series: CoordinateSeries, k: int) -> ReturnSample:
    n = len(series)
    if not 1 <= k <= n - 2:
        raise ParameterError(f"lag {k} outside [1, {n - 2}] (need at least 2 increments)")
    step = sampling_step(series)
    xi = series.x[k:] - series.x[:-k]
    xi.setflags(write=False)
    return ReturnSample(k=k, tau=k * step, values=xi, mean=float(xi.mean()), std=float(xi.std()))


def estimate_diffusion(series: CoordinateSeries, k: int = 1) -> float:
    """``mean(xi**2) / (2 tau)`` at lag ``k``, in 1/years.

    The raw second moment is used (no mean subtraction), so a constant
    drift contributes ``(mu tau)**2 / (2 tau)``; that is negligible at weekly
    horizons. A constant series gives 0 and emits :class:`ZeroDiffusionWarning`.
    """
    r = returns_at_horizon(series, k)
    value = float(np.mean(r.values ** 2)) / (2.0 * r.tau)
    if value == 0.0:
        warnings.warn("zero diffusion: series has no fluctuations", ZeroDiffusionWarning, stacklevel=2)
    return value


def uncertainty_product(mass: float, diffusion: float) -> float:
    """Fluctuation energy times resolution, ``m * D``.

    With ``hbar_eff = 2 m D`` this is ``hbar_eff / 2`` identically.
    """
    if mass <= 0 or diffusion <= 0:
        raise ParameterError("mass and diffusion must be positive")
    return mass * diffusion


def estimate_hurst(series: CoordinateSeries, lags: Sequence[int] = DEFAULT_LAGS,
                   mass: float = 1.0) -> ScalingReport:
    """Fit ``ln std(xi_k) = H ln tau_k + c`` by ordinary least squares.

    Lags that do not leave at least two increments are dropped. Fits with
    zero-variance horizons or ``H`` outside (0, 1) come back with
    ``degenerate=True`` rather than raising.
    """
    n = len(series)
    usable = sorted({int(k) for k in lags if 1 <= int(k) <= n - 2})
    if len(usable) < 3:
        raise InsufficientDataError(
            f"need at least 3 usable lags, got {usable} for a series of length {n}"
        )
    samples = [returns_at_horizon(series, k) for k in usable]
    std = np.array([s.std for s in samples])
    tau = np.array([s.tau for s in samples])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ZeroDiffusionWarning)
        diffusion = estimate_diffusion(series, usable[0])

    if np.any(std <= 0):
        slope = intercept = r2 = H = D = float("nan")
        degenerate = True
    else:
        lx, ly = np.log(tau), np.log(std)
        slope, intercept = np.polyfit(lx, ly, 1)
        resid = ly - (slope * lx + intercept)
        ss_tot = float(np.sum((ly - ly.mean()) ** 2))
        r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
        H = float(slope)
        D = 1.0 / H if H != 0 else float("inf")
        degenerate = not 0.0 < H < 1.0
    if degenerate:
        log.warning("degenerate Hurst fit (H=%s) on lags %s", H, usable)

    return ScalingReport(
        lags=tuple(usable), H=H, D=D, slope=float(slope), intercept=float(intercept),
        r2=float(r2), diffusion=diffusion,
        epsilon_tau=mass * diffusion,
        degenerate=degenerate, zero_diffusion=diffusion == 0.0, mass=mass,
    )


def rolling_diffusion(series: CoordinateSeries, window: int, step: int = 1) -> DiffusionSeries:
    """Diffusion estimated on sliding windows of ``window`` samples.

    ``delta`` is the fluctuation about the arithmetic mean of the window
    estimates. At least two windows are required, except when the window
    spans the whole series, which yields one estimate and ``delta == 0``.
    """
    n = len(series)
    if window < 8:
        raise ParameterError(f"window must hold at least 8 samples, got {window}")
    if step < 1:
        raise ParameterError(f"step must be >= 1, got {step}")
    starts = list(range(0, n - window + 1, step))
    if not starts or (len(starts) < 2 and window != n):
        raise InsufficientDataError(
            f"window {window} / step {step} gives {len(starts)} windows on {n} samples; need 2"
        )
    sampling_step(series)
    centers, values = [], []
    for s in starts:
        t = series.t[s:s + window]
        sub = CoordinateSeries(t - t[0], series.x[s:s + window])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ZeroDiffusionWarning)
            values.append(estimate_diffusion(sub))
        centers.append(0.5 * (t[0] + t[-1]))
    values = np.array(values)
    mean = float(values.mean())
    return DiffusionSeries(
        t=np.array(centers), diffusion=values, mean=mean,
        delta=values - mean, window=window, step=step,
    )
