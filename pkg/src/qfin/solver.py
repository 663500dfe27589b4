"""Finite-difference Schrödinger solvers on a uniform price grid.

The Hamiltonian is ``H = -(hbar**2 / 2m) lap + Phi`` with ``hbar = 2 m D``,
discretized with the three-point Laplacian. Grid points are interior nodes:
the hard walls sit one spacing beyond each end, so a box of width ``L``
sampled at ``n`` points has ``dx = L / (n + 1)``.

A potential extracted from a density (:class:`~qfin.inverse.PotentialProfile`)
carries the density's edge amplitude ratios; for it the ghost node beyond
each end is ``ratio * psi[edge]`` instead of zero. With ratios of zero that is
the plain Dirichlet wall.
"""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Iterator, Optional, Sequence, Union

import numpy as np
from scipy.linalg import LinAlgError, eigh_tridiagonal
from scipy.linalg.lapack import zgtsv

from .density import DEFAULT_FLOOR
from .errors import ConvergenceError, NumericalError, ParameterError, RegimeError
from .inverse import ModelParams, PotentialProfile

log = logging.getLogger(__name__)

MIN_POINTS = 8
RESIDUAL_TOL = 1e-8
FIXED_POINT_TOL = 1e-10
FIXED_POINT_MAXITER = 50

Potential = Union[PotentialProfile, Sequence[float], np.ndarray]


def uniform_spacing(x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or len(x) < MIN_POINTS:
        raise ParameterError(f"grid needs at least {MIN_POINTS} points")
    dx = float((x[-1] - x[0]) / (len(x) - 1))
    if dx <= 0 or np.max(np.abs(np.diff(x) - dx)) > 1e-9 * max(1.0, abs(dx)):
        raise ParameterError("grid must be uniform and increasing")
    return dx


def box_grid(lo: float, hi: float, n: int) -> np.ndarray:
    """``n`` interior nodes of a box with walls at ``lo`` and ``hi``."""
    return np.linspace(lo, hi, n + 2)[1:-1]


def _resolve(potential: Potential, x=None):
    """Return ``(x, Phi, edge_ratio)`` for a profile or a bare array."""
    if isinstance(potential, PotentialProfile):
        if x is not None and not np.allclose(x, potential.x, rtol=0, atol=1e-12):
            raise ParameterError("profile grid does not match the state grid")
        return np.asarray(potential.x), np.asarray(potential.phi_anchored, dtype=float), potential.edge_ratio
    V = np.asarray(potential, dtype=float)
    if x is None:
        raise ParameterError("a grid is required with a bare potential array")
    x = np.asarray(x, dtype=float)
    if V.shape != x.shape:
        raise ParameterError(f"potential has {V.shape} values for a grid of {x.shape}")
    return x, V, (0.0, 0.0)


def hamiltonian_bands(V, dx: float, kinetic: float, edge_ratio=(0.0, 0.0)):
    """Main diagonal and off-diagonal of the real symmetric tridiagonal ``H``."""
    c = kinetic / dx ** 2
    diag = 2.0 * c + np.asarray(V, dtype=float)
    diag[0] -= c * edge_ratio[0]
    diag[-1] -= c * edge_ratio[1]
    off = np.full(len(diag) - 1, -c)
    return diag, off


def _apply_tridiagonal(diag, off, v):
    out = diag * v
    out[:-1] += off * v[1:]
    out[1:] += off * v[:-1]
    return out


@dataclass(frozen=True, eq=False)
class EigenSolution:
    energy: float
    psi: np.ndarray
    index: int
    x: np.ndarray
    residual: float

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])


def spectrum(potential: Potential, params: Optional[ModelParams] = None, grid=None,
             count: int = 1) -> list[EigenSolution]:
    """Lowest ``count`` eigenpairs, ascending in energy.

    Eigenfunctions are real, normalized to ``sum(psi**2) dx = 1`` and signed
    so their largest-magnitude entry (the leftmost, on ties) is positive.
    """
    if params is None:
        if not isinstance(potential, PotentialProfile):
            raise ParameterError("model parameters are required with a bare potential")
        params = potential.params
    x, V, edge = _resolve(potential, grid)
    dx = uniform_spacing(x)
    if not np.all(np.isfinite(V)):
        raise ParameterError("potential has non-finite entries")
    n = len(x)
    if not 1 <= count < n - 2:
        raise ParameterError(f"count must be in [1, {n - 3}] for {n} points")

    diag, off = hamiltonian_bands(V, dx, params.kinetic, edge)
    try:
        w, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(0, count - 1))
    except LinAlgError as exc:
        raise ConvergenceError(f"tridiagonal eigensolver failed: {exc}") from exc

    scale = max(1.0, float(np.max(np.abs(diag)) + 2.0 * abs(off[0])))
    out = []
    for i in range(count):
        psi = vecs[:, i]
        psi = psi / np.sqrt(np.sum(psi ** 2) * dx)
        # leftmost near-maximal entry, so mirror-symmetric ties break the same way every run
        mag = np.abs(psi)
        if psi[np.flatnonzero(mag >= (1.0 - 1e-6) * mag.max())[0]] < 0:
            psi = -psi
        res = float(np.max(np.abs(_apply_tridiagonal(diag, off, psi) - w[i] * psi)) / np.max(np.abs(psi)))
        if res > RESIDUAL_TOL * scale:
            raise ConvergenceError(f"eigenpair {i} residual {res:.3g} exceeds tolerance", residual=res)
        out.append(EigenSolution(energy=float(w[i]), psi=psi, index=i, x=x, residual=res))
    return out


def ground_state(potential: Potential, params: Optional[ModelParams] = None, grid=None) -> EigenSolution:
    """Lowest eigenpair. For a :class:`PotentialProfile` the anchored column is used,
    so the ground energy equals the profile's ``anchor_offset``."""
    return spectrum(potential, params, grid, count=1)[0]


# --------------------------------------------------------------------------
# Wave states and propagation


@dataclass(frozen=True, eq=False)
class WaveState:
    x: np.ndarray
    psi: np.ndarray
    params: ModelParams
    t: float = 0.0

    def __post_init__(self):
        psi = np.array(self.psi, dtype=complex)
        psi.setflags(write=False)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        uniform_spacing(self.x)
        if psi.shape != self.x.shape:
            raise ParameterError("psi and grid differ in shape")

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    @property
    def norm(self) -> float:
        return float(np.sum(self.density) * self.dx)

    def normalized(self) -> "WaveState":
        return replace(self, psi=self.psi / np.sqrt(self.norm))

    def write_csv(self, stream) -> None:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["x", "re_psi", "im_psi", "P"])
        for xi, p in zip(self.x, self.psi):
            w.writerow([repr(float(xi)), repr(float(p.real)), repr(float(p.imag)), repr(float(abs(p) ** 2))])

    @classmethod
    def from_eigen(cls, sol: EigenSolution, params: ModelParams, t: float = 0.0) -> "WaveState":
        return cls(sol.x, sol.psi.astype(complex), params, t)


def gaussian_packet(x, params: ModelParams, center: float, width: float, wavenumber: float = 0.0) -> WaveState:
    """Normalized packet whose ``|psi|**2`` has standard deviation ``width``."""
    x = np.asarray(x, dtype=float)
    psi = np.exp(-((x - center) ** 2) / (4.0 * width ** 2) + 1j * wavenumber * x)
    return WaveState(x, psi, params).normalized()


def _cn_step(psi, diag, off, dt: float, hbar: float):
    """One Crank–Nicolson step ``(1 + i dt H / 2hbar) psi' = (1 - i dt H / 2hbar) psi``."""
    a = 0.5j * dt / hbar
    rhs = psi - a * _apply_tridiagonal(diag, off, psi)
    lower = a * off.astype(complex)
    _, _, _, out, info = zgtsv(lower, 1.0 + a * diag, lower.copy(), rhs)
    if info != 0:
        raise NumericalError(f"tridiagonal solve failed (info={info})")
    return out


def _check_accuracy(V, dt, hbar):
    ratio = dt * float(np.max(np.abs(V))) / hbar
    if ratio >= 0.5:
        warnings.warn(f"dt * max|Phi| / hbar = {ratio:.3g} >= 0.5; phases will be inaccurate", stacklevel=3)


def iter_propagate(state: WaveState, potential: Potential, dt: float, steps: int) -> Iterator[WaveState]:
    """Yield the state after each Crank–Nicolson step. The norm is not re-imposed."""
    if dt <= 0:
        raise ParameterError("dt must be positive")
    x, V, edge = _resolve(potential, state.x)
    params = state.params
    diag, off = hamiltonian_bands(V, state.dx, params.kinetic, edge)
    _check_accuracy(V, dt, params.hbar)
    psi = np.array(state.psi)
    for n in range(1, steps + 1):
        psi = _cn_step(psi, diag, off, dt, params.hbar)
        yield WaveState(state.x, psi, params, state.t + n * dt)


def propagate(state: WaveState, potential: Potential, dt: float, steps: int) -> WaveState:
    out = state
    for out in iter_propagate(state, potential, dt, steps):
        pass
    return out


# --------------------------------------------------------------------------
# Varying diffusion


Schedule = Union[float, Callable[[float], float]]


def _padded(psi, edge):
    return np.concatenate([[edge[0] * psi[0]], psi, [edge[1] * psi[-1]]])


def _floored(psi, floor: float):
    """``psi`` with magnitudes below ``sqrt(floor) * max|psi|`` raised to that level."""
    level = np.sqrt(floor) * np.max(np.abs(psi))
    mag = np.abs(psi)
    small = mag < level
    if not np.any(small):
        return psi
    phase = np.where(mag > 0, psi / np.where(mag > 0, mag, 1.0), 1.0)
    return np.where(small, level * phase, psi)


def log_laplacian(psi, dx: float, edge=(0.0, 0.0), floor: float = DEFAULT_FLOOR) -> np.ndarray:
    """Discrete ``lap(ln psi) = lap(psi)/psi - (grad(psi)/psi)**2``.

    Centered differences with the same ghost nodes as the Hamiltonian;
    the denominator is floored near nodes.
    """
    p = _padded(np.asarray(psi, dtype=complex), edge)
    lap = (p[2:] - 2.0 * p[1:-1] + p[:-2]) / dx ** 2
    grad = (p[2:] - p[:-2]) / (2.0 * dx)
    s = _floored(p[1:-1], floor)
    return lap / s - (grad / s) ** 2


def _schedule_fn(schedule: Schedule) -> Callable[[float], float]:
    if callable(schedule):
        return schedule
    value = float(schedule)
    return lambda t: value


def iter_propagate_generalized(state: WaveState, potential: Potential, mean_diffusion: float,
                               schedule: Schedule, dt: float, steps: int, mode: str = "full",
                               floor: float = DEFAULT_FLOOR,
                               tol: float = FIXED_POINT_TOL,
                               max_iter: int = FIXED_POINT_MAXITER) -> Iterator[WaveState]:
    """Propagation with time-dependent diffusion ``<D> + dD(t)``.

    In units of ``hbar = 2 m <D>`` the generator is
    ``-2m<D>**2 lap + Phi - 2m<D> dD(t) lap(ln psi)``. That is the
    varying-diffusion kinetic term plus the ``dD (grad ln psi)**2``
    correction, combined through ``lap(psi) - (grad psi)**2/psi = psi lap(ln psi)``.

    ``mode="full"`` evaluates ``lap(ln psi)`` at the step midpoint
    ``(psi_n + psi_{n+1}) / 2`` and iterates each Crank–Nicolson step to a fixed
    point. ``mode="perturbative"`` freezes it at the initial state, which
    makes every step linear.
    """
    if mode not in ("full", "perturbative"):
        raise ParameterError(f"unknown mode {mode!r}")
    if dt <= 0:
        raise ParameterError("dt must be positive")
    if mean_diffusion <= 0:
        raise ParameterError("mean diffusion must be positive")
    delta = _schedule_fn(schedule)
    x, V, edge = _resolve(potential, state.x)
    params = ModelParams(state.params.mass, mean_diffusion)
    hbar = params.hbar
    dx = state.dx
    diag0, off = hamiltonian_bands(V, dx, params.kinetic, edge)
    _check_accuracy(V, dt, hbar)
    psi = np.array(state.psi)
    frozen = log_laplacian(psi, dx, edge, floor) if mode == "perturbative" else None

    for n in range(steps):
        t_mid = state.t + (n + 0.5) * dt
        d = float(delta(t_mid))
        if abs(d) >= mean_diffusion:
            raise RegimeError(f"|dD({t_mid:.6g})| = {abs(d):.6g} >= <D> = {mean_diffusion:.6g}")
        if frozen is not None:
            psi = _cn_step(psi, diag0 - hbar * d * frozen, off, dt, hbar)
        else:
            trial = psi
            trace = []
            for _ in range(max_iter):
                lap_ln = log_laplacian(0.5 * (psi + trial), dx, edge, floor)
                nxt = _cn_step(psi, diag0 - hbar * d * lap_ln, off, dt, hbar)
                change = float(np.max(np.abs(nxt - trial)))
                trace.append(change)
                trial = nxt
                if change < tol:
                    break
            else:
                raise ConvergenceError(
                    f"fixed point did not converge in {max_iter} iterations at t={t_mid:.6g}",
                    residual=trace[-1], trace=trace,
                )
            psi = trial
        yield WaveState(state.x, psi, state.params, state.t + (n + 1) * dt)


def propagate_generalized(state: WaveState, potential: Potential, mean_diffusion: float,
                          schedule: Schedule, dt: float, steps: int, mode: str = "full",
                          **kwargs) -> WaveState:
    out = state
    for out in iter_propagate_generalized(state, potential, mean_diffusion, schedule, dt, steps,
                                          mode, **kwargs):
        pass
    return out


def sinusoid(amplitude: float, period: float, phase: float = 0.0) -> Callable[[float], float]:
    return lambda t: amplitude * np.sin(2.0 * np.pi * t / period + phase)


def tabulated(t, values) -> Callable[[float], float]:
    """Linear interpolation of a ``(t, delta_D)`` table, held constant outside it."""
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    return lambda s: float(np.interp(s, t, values))


# --------------------------------------------------------------------------
# Madelung fields


@dataclass(frozen=True, eq=False)
class MadelungFields:
    x: np.ndarray
    A: np.ndarray
    S: np.ndarray
    V: np.ndarray
    hbar: float
    phase_ref: float
    nodes: tuple

    @property
    def P(self) -> np.ndarray:
        return self.A ** 2

    def recompose(self) -> np.ndarray:
        return self.A * np.exp(1j * (self.S / self.hbar + self.phase_ref))


def madelung_decompose(state: WaveState, floor: float = DEFAULT_FLOOR) -> MadelungFields:
    """Split ``psi = A exp(i S / hbar)``; ``S`` is zero at the grid center.

    Points where ``|psi|**2 < floor * max|psi|**2`` are listed in ``nodes``:
    the phase there is unreliable, though the fields are still returned.
    """
    psi = state.psi
    hbar = state.params.hbar
    A = np.abs(psi)
    nodes = tuple(int(i) for i in np.flatnonzero(A ** 2 < floor * np.max(A) ** 2))
    phase = np.unwrap(np.angle(psi))
    c = len(psi) // 2
    ref = float(phase[c])
    S = hbar * (phase - ref)
    V = np.gradient(S, state.dx) / state.params.mass
    return MadelungFields(x=state.x, A=A, S=S, V=V, hbar=hbar, phase_ref=ref, nodes=nodes)


@dataclass(frozen=True)
class ContinuityResidual:
    residual: np.ndarray
    max: float
    l2: float


def continuity_residual(states: Sequence[WaveState], dt: float) -> ContinuityResidual:
    """Residual of ``dP/dt + d(P V)/dx = 0`` over a sequence of states ``dt`` apart.

    Centered differences in time (two states: a forward difference against
    the averaged flux) and in space; interior grid points only.
    """
    if len(states) < 2:
        raise ParameterError("need at least 2 states")
    x = states[0].x
    for s in states[1:]:
        if s.x.shape != x.shape or not np.array_equal(s.x, x):
            raise ParameterError("states live on different grids")
    dx = states[0].dx
    P = np.array([s.density for s in states])
    flux = []
    for s in states:
        f = madelung_decompose(s)
        flux.append(f.P * f.V)
    flux = np.array(flux)
    div = (flux[:, 2:] - flux[:, :-2]) / (2.0 * dx)
    if len(states) == 2:
        r = (P[1, 1:-1] - P[0, 1:-1]) / dt + 0.5 * (div[0] + div[1])
        r = r[None, :]
    else:
        r = (P[2:, 1:-1] - P[:-2, 1:-1]) / (2.0 * dt) + div[1:-1]
    return ContinuityResidual(
        residual=r,
        max=float(np.max(np.abs(r))),
        l2=float(np.sqrt(np.sum(r ** 2) * dx / r.shape[0])),
    )
