import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qfin import density, inverse
from qfin.errors import ParameterError
from qfin.inverse import ModelParams

SIGMA = 0.3
PARAMS = ModelParams(mass=1.0, diffusion=0.0169)


def gaussian_grid(n=201, sigma=SIGMA, half=4.0):
    x = np.linspace(-half * sigma, half * sigma, n)
    return density.from_values(x, np.exp(-x ** 2 / (2 * sigma ** 2)))


def harmonic_well(x, params, sigma=SIGMA):
    return 2 * params.mass * params.diffusion ** 2 * (x ** 2 / (4 * sigma ** 4) - 1 / (2 * sigma ** 2))


def test_second_derivative_exact_cases():
    np.testing.assert_array_equal(inverse.second_derivative(np.full(7, 3.0), 0.1), 0.0)
    x = np.arange(-5.0, 6.0)
    np.testing.assert_allclose(inverse.second_derivative(x ** 2, 1.0), 2.0, rtol=1e-14)
    assert len(inverse.second_derivative(x ** 2, 1.0)) == len(x) - 2


def test_second_derivative_sin():
    x = np.arange(0, 2 * np.pi, 0.01)
    d2 = inverse.second_derivative(np.sin(x), 0.01)
    assert np.max(np.abs(d2 + np.sin(x[1:-1]))) < 1e-4


def test_second_derivative_too_short():
    with pytest.raises(ParameterError):
        inverse.second_derivative([1.0, 2.0], 1.0)


def test_gaussian_gives_harmonic_well():
    g = gaussian_grid()
    assert density.amplitude(g).A.min() == pytest.approx(g.A.min())  # floor inert
    prof = inverse.extract_potential(g, PARAMS)
    truth = harmonic_well(prof.x, PARAMS)
    r2 = 1 - np.sum((prof.phi_minus_e - truth) ** 2) / np.sum((truth - truth.mean()) ** 2)
    assert r2 > 0.99
    assert len(prof.x) == len(g) - 2
    np.testing.assert_allclose(prof.phi_minus_e, truth, atol=1e-3 * np.ptp(truth))


def test_flat_density_is_inert():
    g = density.from_values(np.linspace(0, 1, 11), np.ones(11))
    prof = inverse.extract_potential(g, PARAMS)
    np.testing.assert_allclose(prof.phi_minus_e, 0.0, atol=1e-12)
    np.testing.assert_allclose(inverse.quantum_potential(g, PARAMS), 0.0, atol=1e-12)
    np.testing.assert_allclose(inverse.osmotic_velocity(g, PARAMS), 0.0, atol=1e-12)
    assert inverse.mean_osmotic_energy(g, PARAMS) == pytest.approx(0.0, abs=1e-20)


def test_quantum_potential_at_centre():
    g = gaussian_grid()
    Q = inverse.quantum_potential(g, PARAMS)
    centre = len(Q) // 2
    expected = PARAMS.mass * PARAMS.diffusion ** 2 / SIGMA ** 2
    assert Q[centre] == pytest.approx(expected, rel=1e-3)


def test_osmotic_velocity_gaussian():
    errors = []
    for n in (201, 401):
        g = gaussian_grid(n)
        U = inverse.osmotic_velocity(g, PARAMS)
        exact = -PARAMS.diffusion * g.x[1:-1] / SIGMA ** 2
        errors.append(np.max(np.abs(U - exact)))
        np.testing.assert_allclose(U, exact, rtol=5e-3, atol=1e-12)
    # central difference: error ~ dx**2
    assert errors[0] / errors[1] == pytest.approx(4.0, rel=0.05)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.integers(3, 60), elements=st.floats(0.01, 1.0)))
def test_symmetric_density_gives_antisymmetric_velocity(half):
    P = np.concatenate([half, half[-2::-1]])
    g = density.from_values(np.linspace(-1, 1, len(P)), P)
    U = inverse.osmotic_velocity(g, PARAMS)
    np.testing.assert_allclose(U, -U[::-1], atol=1e-12 * max(1.0, np.max(np.abs(U))))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(5, 200), elements=st.floats(0.0, 1.0)),
       st.floats(1e-3, 1.0))
def test_q_plus_potential_vanishes(P, D):
    if P.max() <= 0:
        return
    g = density.from_values(np.linspace(0, 1, len(P)), P)
    params = ModelParams(1.0, D)
    prof = inverse.extract_potential(g, params)
    assert np.all(np.isfinite(prof.phi_minus_e))
    Q = inverse.quantum_potential(g, params)
    np.testing.assert_allclose(Q + prof.phi_minus_e, 0.0, atol=1e-12 * max(1.0, np.max(np.abs(Q))))
    np.testing.assert_array_equal(prof.Q, -prof.phi_minus_e)


def test_mean_osmotic_energy_gaussian():
    g = gaussian_grid()
    expected = 0.5 * PARAMS.mass * PARAMS.diffusion ** 2 / SIGMA ** 2
    assert inverse.mean_osmotic_energy(g, PARAMS) == pytest.approx(expected, rel=0.01)


def test_integration_by_parts():
    from scipy.integrate import trapezoid
    g = gaussian_grid()
    prof = inverse.extract_potential(g, PARAMS)
    P = g.P[1:-1]
    A = g.A
    grad = inverse.first_derivative(A, g.dx)
    # <Q> = -int (Phi-E) P dx + [2 m D^2 A grad A] over the boundary
    boundary = PARAMS.kinetic * (A[-2] * grad[-1] - A[1] * grad[0])
    rhs = -trapezoid(prof.phi_minus_e * P, dx=g.dx) + boundary
    assert inverse.mean_osmotic_energy(g, PARAMS) == pytest.approx(rhs, rel=0.02)


def test_potential_scales_as_diffusion_squared():
    g = gaussian_grid(101)
    a = inverse.extract_potential(g, ModelParams(1.0, 0.02)).phi_minus_e
    b = inverse.extract_potential(g, ModelParams(1.0, 0.04)).phi_minus_e
    np.testing.assert_allclose(b, 4 * a, rtol=1e-13)


def test_anchoring_and_edge_ratio():
    g = gaussian_grid(51)
    prof = inverse.extract_potential(g, PARAMS)
    assert prof.phi_anchored.min() == 0.0
    np.testing.assert_allclose(prof.phi_anchored - prof.phi_minus_e, prof.anchor_offset)
    assert prof.edge_ratio[0] == pytest.approx(g.A[0] / g.A[1])
    assert prof.report()["points"] == 49


def test_requires_five_bins():
    with pytest.raises(ParameterError):
        inverse.extract_potential(density.from_values([0, 1, 2, 3.0], [1, 2, 2, 1]), PARAMS)


def test_well_shape_gaussian():
    shape = inverse.well_shape(inverse.extract_potential(gaussian_grid(), PARAMS))
    assert shape["well_shaped"] and shape["argmin_x"] == pytest.approx(0.0, abs=0.01)


def test_model_params():
    p = ModelParams(2.0, 0.5)
    assert p.hbar == 2.0 and p.kinetic == 1.0
    with pytest.raises(ParameterError):
        ModelParams(0.0, 1.0)


def test_profile_csv(tmp_path):
    import csv
    prof = inverse.extract_potential(gaussian_grid(21), PARAMS)
    p = tmp_path / "p.csv"
    with open(p, "w") as fh:
        prof.write_csv(fh)
    rows = list(csv.DictReader(open(p)))
    assert list(rows[0]) == ["x", "phi_minus_E", "phi_anchored", "Q", "U"]
    assert float(rows[3]["phi_minus_E"]) == prof.phi_minus_e[3]
