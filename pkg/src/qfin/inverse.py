"""Potential extraction from an empirical density and Bohmian diagnostics.

For a stationary state with zero mean velocity the Schrödinger equation
reduces to ``(Phi - E) / m = 2 D**2 * lap(A) / A`` with ``A = sqrt(P)``.
Everything here evaluates that relation (and the related quantum potential
``Q`` and osmotic velocity ``U = D grad(P) / P``) with three-point stencils
on the interior of the density grid.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid

from .density import DensityGrid, amplitude
from .errors import ParameterError


@dataclass(frozen=True)
class ModelParams:
    """Inertial mass ``m`` and diffusion ``D``; ``hbar = 2 m D``."""

    mass: float = 1.0
    diffusion: float = 1.0

    def __post_init__(self):
        if not (self.mass > 0 and self.diffusion > 0):
            raise ParameterError(f"mass and diffusion must be positive: {self}")

    @property
    def hbar(self) -> float:
        return 2.0 * self.mass * self.diffusion

    @property
    def kinetic(self) -> float:
        """Coefficient of ``-lap`` in the Hamiltonian, ``hbar**2 / 2m = 2 m D**2``."""
        return 2.0 * self.mass * self.diffusion ** 2


@dataclass(frozen=True, eq=False)
class PotentialProfile:
    """``Phi - E`` on the interior bin centers.

    ``phi_anchored`` is ``phi_minus_e`` shifted so its minimum is 0;
    ``anchor_offset`` is the shift that was added. ``edge_ratio`` holds
    ``A[0]/A[1]`` and ``A[-1]/A[-2]`` of the source density, i.e. the
    boundary closure under which the density amplitude is an exact
    eigenvector of the discrete Hamiltonian.
    """

    x: np.ndarray
    dx: float
    phi_minus_e: np.ndarray
    params: ModelParams
    Q: Optional[np.ndarray] = None
    U: Optional[np.ndarray] = None
    edge_ratio: tuple = (0.0, 0.0)
    provenance: dict = field(default_factory=dict)

    @property
    def anchor_offset(self) -> float:
        return -float(np.min(self.phi_minus_e))

    @property
    def phi_anchored(self) -> np.ndarray:
        return self.phi_minus_e + self.anchor_offset

    def write_csv(self, stream) -> None:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["x", "phi_minus_E", "phi_anchored", "Q", "U"])
        n = len(self.x)
        Q = self.Q if self.Q is not None else np.full(n, np.nan)
        U = self.U if self.U is not None else np.full(n, np.nan)
        for row in zip(self.x, self.phi_minus_e, self.phi_anchored, Q, U):
            w.writerow([repr(float(v)) for v in row])

    def report(self) -> dict:
        return {
            "points": len(self.x),
            "x_min": float(self.x[0]),
            "x_max": float(self.x[-1]),
            "anchor_offset": self.anchor_offset,
            "argmin_x": float(self.x[int(np.argmin(self.phi_minus_e))]),
            "edge_ratio": list(self.edge_ratio),
            "provenance": self.provenance,
        }

    def write_json(self, stream) -> None:
        json.dump(self.report(), stream, indent=2, sort_keys=True)


def second_derivative(values, dx: float) -> np.ndarray:
    """Three-point ``(y[k+1] - 2 y[k] + y[k-1]) / dx**2`` on interior points."""
    y = np.asarray(values)
    if y.ndim != 1 or len(y) < 3:
        raise ParameterError("second derivative needs at least 3 grid points")
    return (y[2:] - 2.0 * y[1:-1] + y[:-2]) / dx ** 2


def first_derivative(values, dx: float) -> np.ndarray:
    y = np.asarray(values)
    if y.ndim != 1 or len(y) < 3:
        raise ParameterError("first derivative needs at least 3 grid points")
    return (y[2:] - y[:-2]) / (2.0 * dx)


def _floored(grid: DensityGrid) -> DensityGrid:
    return grid if grid.floor is not None else amplitude(grid)


def _curvature_ratio(grid: DensityGrid) -> np.ndarray:
    A = grid.A
    return second_derivative(A, grid.dx) / A[1:-1]


def quantum_potential(grid: DensityGrid, params: ModelParams) -> np.ndarray:
    """``Q = -(hbar**2 / 2m) lap(A) / A`` on interior points."""
    return -params.kinetic * _curvature_ratio(_floored(grid))


def osmotic_velocity(grid: DensityGrid, params: ModelParams) -> np.ndarray:
    """``U = D grad(P) / P`` with ``P = A**2`` after flooring, interior points."""
    g = _floored(grid)
    P = g.A ** 2
    return params.diffusion * first_derivative(P, g.dx) / P[1:-1]


def mean_osmotic_energy(grid: DensityGrid, params: ModelParams) -> float:
    """Trapezoidal ``integral of m U**2 P / 2`` over the interior grid."""
    g = _floored(grid)
    U = osmotic_velocity(g, params)
    P = g.A[1:-1] ** 2
    return float(trapezoid(0.5 * params.mass * U ** 2 * P, dx=g.dx))


def extract_potential(grid: DensityGrid, params: ModelParams) -> PotentialProfile:
    """Invert the stationary equation for ``Phi - E`` given a density.

    The density is floored with the default :func:`~qfin.density.amplitude`
    regularization unless that was already done. End bins are dropped.
    """
    if len(grid) < 5:
        raise ParameterError(f"need at least 5 bins, got {len(grid)}")
    g = _floored(grid)
    A = g.A
    phi = params.kinetic * _curvature_ratio(g)
    return PotentialProfile(
        x=np.array(g.x[1:-1]),
        dx=g.dx,
        phi_minus_e=phi,
        params=params,
        Q=-phi,
        U=osmotic_velocity(g, params),
        edge_ratio=(float(A[0] / A[1]), float(A[-1] / A[-2])),
        provenance={
            "diffusion": params.diffusion,
            "mass": params.mass,
            "bin_width": g.dx,
            "floor": g.floor,
            "bins": len(g),
        },
    )


def well_shape(profile: PotentialProfile) -> dict:
    """Crude well test: interior minimum and both outer quarters above the central half.

    Means are compared rather than single points so one noisy histogram box
    does not decide the outcome.
    """
    phi = profile.phi_minus_e
    n = len(phi)
    q = max(1, n // 4)
    i_min = int(np.argmin(phi))
    left, right = float(phi[:q].mean()), float(phi[-q:].mean())
    centre = float(phi[q:n - q].mean()) if n > 2 * q else float(phi.mean())
    interior_min = 0 < i_min < n - 1
    return {
        "interior_minimum": interior_min,
        "left_wall": left > centre,
        "right_wall": right > centre,
        "well_shaped": interior_min and left > centre and right > centre,
        "argmin_x": float(profile.x[i_min]),
    }
