"""Synthetic paths with known scaling, used as oracles for the estimators.

Random numbers come from numpy's counter-based ``Philox`` bit generator
keyed by the user seed, so every generator is a pure function of its
arguments and the seed.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import stats

from .density import DensityGrid, histogram
from .errors import NumericalError, ParameterError
from .inverse import ModelParams
from .market_data import CoordinateSeries
from .solver import WaveState

MAX_FBM_STEPS = 2 ** 14


def rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def gbm_path(sigma: float, mu: float, n: int, dt: float, seed: int) -> CoordinateSeries:
    """Log-price of geometric Brownian motion, ``n`` steps from ``x = 0``.

    True diffusion ``sigma**2 / 2``, true Hurst exponent 1/2.
    """
    if not (sigma > 0 and n >= 2 and dt > 0):
        raise ParameterError("need sigma > 0, n >= 2, dt > 0")
    z = rng(seed).standard_normal(n)
    x = np.concatenate([[0.0], np.cumsum(mu * dt + sigma * np.sqrt(dt) * z)])
    return CoordinateSeries(dt * np.arange(n + 1), x)


def fgn_autocovariance(hurst: float, n: int) -> np.ndarray:
    """Unit-variance fractional Gaussian noise autocovariance at lags 0..n-1."""
    k = np.arange(n, dtype=float)
    h2 = 2.0 * hurst
    return 0.5 * (np.abs(k + 1) ** h2 - 2.0 * np.abs(k) ** h2 + np.abs(k - 1) ** h2)


def hosking_transform(gamma: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Map white noise ``z`` to a stationary Gaussian sequence with autocovariance ``gamma``.

    Durbin–Levinson recursion: each value is its best linear prediction from
    the past plus innovation noise of the exact conditional variance. The
    map is linear in ``z`` and exact for any valid (positive definite)
    ``gamma``; cost O(n**2), memory O(n).
    """
    n = len(z)
    out = np.empty(n)
    out[0] = np.sqrt(gamma[0]) * z[0]
    phi = np.zeros(0)
    v = gamma[0]
    for k in range(1, n):
        # reflection coefficient from the previous predictor
        kk = (gamma[k] - phi @ gamma[k - 1:0:-1]) / v
        phi = np.concatenate([phi - kk * phi[::-1], [kk]])
        v = v * (1.0 - kk * kk)
        if not v > 0:
            raise NumericalError(f"covariance not positive definite at step {k} (innovation variance {v})")
        out[k] = phi @ out[k - 1::-1] + np.sqrt(v) * z[k]
    return out


def fbm_path(hurst: float, n: int, dt: float, scale: float, seed: int) -> CoordinateSeries:
    """Fractional Brownian motion with exact increment covariance.

    ``Var(x[k] - x[0]) = scale**2 * (k dt)**(2 H)``.
    """
    if not 0.0 < hurst < 1.0:
        raise ParameterError(f"Hurst exponent must lie in (0, 1), got {hurst}")
    if not 2 <= n <= MAX_FBM_STEPS:
        raise ParameterError(f"n must be in [2, {MAX_FBM_STEPS}], got {n}")
    if not (dt > 0 and scale > 0):
        raise ParameterError("dt and scale must be positive")
    z = rng(seed).standard_normal(n)
    noise = hosking_transform(fgn_autocovariance(hurst, n), z)
    x = np.concatenate([[0.0], np.cumsum(scale * dt ** hurst * noise)])
    return CoordinateSeries(dt * np.arange(n + 1), x)


# --------------------------------------------------------------------------
# Ensembles


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    t: np.ndarray
    x: np.ndarray  # shape (paths, times)
    generator: str
    seed: int
    parameters: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.x.shape[0]

    def path(self, i: int) -> CoordinateSeries:
        return CoordinateSeries(self.t - self.t[0], self.x[i])

    def manifest(self) -> dict:
        return {"generator": self.generator, "seed": self.seed, "parameters": self.parameters,
                "paths": self.n_paths, "times": len(self.t)}

    def write_csv(self, stream) -> None:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["path", "t", "x"])
        for i in range(self.n_paths):
            for t, x in zip(self.t, self.x[i]):
                w.writerow([i, repr(float(t)), repr(float(x))])


def path_seeds(seed: int, n_paths: int) -> list[int]:
    """Per-path seeds derived from ``(seed, path index)``."""
    children = np.random.SeedSequence(seed).spawn(n_paths)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def gbm_ensemble(sigma, mu, n, dt, seed, n_paths) -> PathEnsemble:
    paths = [gbm_path(sigma, mu, n, dt, s) for s in path_seeds(seed, n_paths)]
    return PathEnsemble(paths[0].t, np.array([p.x for p in paths]), "gbm", seed,
                        {"sigma": sigma, "mu": mu, "n": n, "dt": dt, "H": 0.5, "D": sigma ** 2 / 2})


def fbm_ensemble(hurst, n, dt, scale, seed, n_paths) -> PathEnsemble:
    paths = [fbm_path(hurst, n, dt, scale, s) for s in path_seeds(seed, n_paths)]
    return PathEnsemble(paths[0].t, np.array([p.x for p in paths]), "fbm", seed,
                        {"H": hurst, "n": n, "dt": dt, "scale": scale})


def forward_drift(state: WaveState, floor: float = 1e-12) -> np.ndarray:
    """``b+ = V + U`` on the state grid.

    With ``g = grad(psi) / psi``: ``U = 2 D Re g`` and ``V = (hbar / m) Im g = 2 D Im g``.
    """
    psi = np.asarray(state.psi)
    mag = np.abs(psi)
    level = np.sqrt(floor) * mag.max()
    safe = np.where(mag < level, level, psi)
    g = np.gradient(psi, state.dx) / safe
    return 2.0 * state.params.diffusion * (g.real + g.imag)


def _reflect(x, lo, hi):
    if x.min() >= lo and x.max() <= hi:
        return x
    width = hi - lo
    y = np.mod(x - lo, 2.0 * width)
    return lo + np.where(y > width, 2.0 * width - y, y)


def _sample_grid_density(gen, x, P, n):
    dx = x[1] - x[0]
    w = P / P.sum()
    idx = gen.choice(len(x), size=n, p=w)
    pos = x[idx] + (gen.random(n) - 0.5) * dx
    return np.clip(pos, x[0], x[-1])


def nelson_sample(source: Union[WaveState, tuple], params: ModelParams, n_paths: int, steps: int,
                  dt: float, seed: int, initial: Union[str, float, np.ndarray] = "psi",
                  record_every: Optional[int] = None) -> PathEnsemble:
    """Euler–Maruyama paths of ``dX = b+(X) dt + sqrt(2 D) dW``.

    ``source`` is a :class:`WaveState` (drift ``V + U`` derived from it) or an
    explicit ``(x, b)`` pair of grid and drift values. The drift is linearly
    interpolated and paths reflect at the grid ends. ``initial`` is ``"psi"``
    (sample ``|psi|**2``), ``"uniform"``, a scalar start or an array of starts.
    Cross-sections are stored every ``record_every`` steps (default: only the
    first and last).
    """
    gen = rng(seed)
    if isinstance(source, WaveState):
        grid, drift = source.x, forward_drift(source)
        density = source.density
    else:
        grid, drift = (np.asarray(a, dtype=float) for a in source)
        density = None
    if not np.all(np.isfinite(drift)):
        raise ParameterError("drift field is not finite")
    lo, hi = float(grid[0]), float(grid[-1])
    dxg = float(grid[1] - grid[0])
    if np.max(np.abs(drift)) * dt >= dxg:
        warnings.warn("max|b+| dt exceeds the grid spacing; drift is under-resolved", stacklevel=2)

    if isinstance(initial, str):
        if initial == "psi":
            if density is None:
                raise ParameterError("initial='psi' needs a WaveState source")
            X = _sample_grid_density(gen, grid, density, n_paths)
        elif initial == "uniform":
            X = lo + (hi - lo) * gen.random(n_paths)
        else:
            raise ParameterError(f"unknown initial distribution {initial!r}")
    else:
        X = np.broadcast_to(np.asarray(initial, dtype=float), (n_paths,)).copy()

    every = steps if record_every is None else int(record_every)
    if every < 1:
        raise ParameterError("record_every must be >= 1")
    noise = np.sqrt(2.0 * params.diffusion * dt)
    # uniform grid: linear interpolation by index arithmetic
    slope = np.append(np.diff(drift), 0.0) / dxg
    times, snaps = [0.0], [X.copy()]
    for k in range(1, steps + 1):
        i = np.minimum(((X - lo) / dxg).astype(np.intp), len(grid) - 1)
        b = drift[i] + slope[i] * (X - grid[i])
        X = _reflect(X + b * dt + noise * gen.standard_normal(n_paths), lo, hi)
        if X.min() < lo or X.max() > hi:
            raise NumericalError("path outside the grid after reflection")
        if k % every == 0 or k == steps:
            times.append(k * dt)
            snaps.append(X.copy())
    return PathEnsemble(
        np.array(times), np.array(snaps).T, "nelson", seed,
        {"mass": params.mass, "diffusion": params.diffusion, "steps": steps, "dt": dt,
         "initial": initial if isinstance(initial, str) else "given"},
    )


def ensemble_histogram(ensemble: PathEnsemble, index: Union[int, str] = "final", bins: int = 19,
                       range: Optional[tuple] = None) -> DensityGrid:
    """Density of one cross-section of the ensemble. Any number of paths is accepted."""
    i = -1 if index == "final" else int(index)
    return histogram(ensemble.x[:, i], bins=bins, range=range)


def grid_cdf(x, P):
    """CDF of the piecewise-constant density ``P`` on cells centered at ``x``."""
    x = np.asarray(x, dtype=float)
    dx = x[1] - x[0]
    edges = np.concatenate([x - 0.5 * dx, [x[-1] + 0.5 * dx]])
    cum = np.concatenate([[0.0], np.cumsum(P)])
    cum = cum / cum[-1]
    return lambda s: np.interp(s, edges, cum)


def ks_distance(samples, x, P) -> float:
    """Kolmogorov–Smirnov distance between samples and a grid density."""
    return float(stats.kstest(np.asarray(samples), grid_cdf(x, P)).statistic)
