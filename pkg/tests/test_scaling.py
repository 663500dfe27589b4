import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qfin import scaling
from qfin.errors import InsufficientDataError, ParameterError, SamplingError
from qfin.market_data import CoordinateSeries
from qfin.simulate import fbm_path, gbm_path

WEEK = 7 / 365.25


def _series(x, dt=WEEK):
    x = np.asarray(x, dtype=float)
    return CoordinateSeries(dt * np.arange(len(x)), x)


def test_returns_linear():
    r = scaling.returns_at_horizon(_series([0, 1, 2, 3]), 1)
    np.testing.assert_array_equal(r.values, [1, 1, 1])
    assert r.std == 0 and r.tau == pytest.approx(WEEK)


def test_returns_periodic_cancellation():
    r = scaling.returns_at_horizon(_series([0, 1, 0, 1]), 2)
    np.testing.assert_array_equal(r.values, [0, 0])
    assert r.tau == pytest.approx(2 * WEEK)


def test_returns_bad_lag_and_sampling():
    s = _series([0, 1, 2, 3])
    for k in (0, 3):
        with pytest.raises(ParameterError):
            scaling.returns_at_horizon(s, k)
    t = np.array([0.0, 1, 2, 5, 6, 7]) * WEEK
    with pytest.raises(SamplingError, match="resample_weekly"):
        scaling.returns_at_horizon(CoordinateSeries(t, np.arange(6.0)), 1)


def test_gbm_std_grows_as_sqrt_k():
    s = gbm_path(0.18, 0.0, 10_000, 1 / 52, seed=7)
    std = [scaling.returns_at_horizon(s, k).std for k in (1, 2, 4)]
    np.testing.assert_allclose(np.array(std) / std[0], np.sqrt([1, 2, 4]), rtol=0.05)


def test_hurst_brownian():
    rep = scaling.estimate_hurst(gbm_path(0.18, 0.0, 10_000, 1 / 52, seed=7))
    assert 0.45 <= rep.H <= 0.55
    assert rep.D * rep.H == 1.0 or rep.D * rep.H == pytest.approx(1.0, rel=1e-15)
    assert rep.r2 > 0.95 and not rep.degenerate
    assert rep.diffusion == pytest.approx(0.0162, rel=0.10)
    assert rep.lags == (1, 2, 4, 8, 16)


@pytest.mark.parametrize("hurst", [0.7, 0.3])
def test_hurst_fbm(hurst):
    rep = scaling.estimate_hurst(fbm_path(hurst, 4096, 1 / 52, 0.2, seed=11))
    assert abs(rep.H - hurst) <= 0.07
    assert rep.r2 > 0.95


def test_hurst_degenerate_line(caplog):
    rep = scaling.estimate_hurst(_series(np.arange(40.0)))
    assert rep.degenerate and np.isnan(rep.H)


def test_hurst_insufficient_lags():
    with pytest.raises(InsufficientDataError):
        scaling.estimate_hurst(_series(np.random.default_rng(0).normal(size=5)))


def test_diffusion_constant_series_warns():
    with pytest.warns(scaling.ZeroDiffusionWarning):
        assert scaling.estimate_diffusion(_series(np.ones(20))) == 0.0
    rep = scaling.estimate_hurst(_series(np.ones(40)))
    assert rep.zero_diffusion and rep.degenerate


def test_diffusion_raw_second_moment():
    # increments 0.1, -0.1, 0.2: mean(xi^2) = 0.06 / 3
    s = _series([0.0, 0.1, 0.0, 0.2], dt=0.5)
    assert scaling.estimate_diffusion(s) == pytest.approx(0.02 / (2 * 0.5), rel=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.floats(-50, 50), st.floats(0.1, 10), st.integers(0, 2 ** 31))
def test_diffusion_shift_and_scale(shift, c, seed):
    x = np.cumsum(np.random.default_rng(seed).normal(size=300))
    base = scaling.estimate_diffusion(_series(x))
    assert scaling.estimate_diffusion(_series(x + shift)) == pytest.approx(base, rel=1e-9)
    assert scaling.estimate_diffusion(_series(c * x)) == pytest.approx(c * c * base, rel=1e-9)
    h0 = scaling.estimate_hurst(_series(x)).H
    assert scaling.estimate_hurst(_series(c * x)).H == pytest.approx(h0, abs=1e-9)


def test_rolling_homogeneous():
    s = gbm_path(0.18, 0.0, 4000, 1 / 52, seed=3)
    r = scaling.rolling_diffusion(s, 256, 32)
    assert np.max(np.abs(r.delta)) / r.mean < 0.5
    assert np.all(r.diffusion > 0)
    assert abs(r.delta.mean()) <= 1e-12 * r.mean


def test_rolling_two_plateaus():
    a = gbm_path(0.1, 0.0, 2000, 1 / 52, seed=1).x
    b = gbm_path(0.2, 0.0, 2000, 1 / 52, seed=2).x
    x = np.concatenate([a, a[-1] + b[1:]])
    r = scaling.rolling_diffusion(_series(x, 1 / 52), 256, 64)
    first = r.diffusion[r.t < 2000 / 52 - 256 / 52].mean()
    second = r.diffusion[r.t > 2000 / 52 + 256 / 52].mean()
    assert second / first == pytest.approx(4.0, rel=0.15)


def test_rolling_whole_series():
    s = gbm_path(0.18, 0.0, 99, 1 / 52, seed=3)
    r = scaling.rolling_diffusion(s, len(s))
    assert len(r.diffusion) == 1 and r.delta[0] == 0.0
    assert r.mean == pytest.approx(scaling.estimate_diffusion(s), rel=1e-14)


def test_rolling_errors():
    s = gbm_path(0.18, 0.0, 50, 1 / 52, seed=3)
    with pytest.raises(ParameterError):
        scaling.rolling_diffusion(s, 7)
    with pytest.raises(InsufficientDataError):
        scaling.rolling_diffusion(s, 45, 10)


@pytest.mark.parametrize("m, D, expected", [(1.0, 0.0169, 0.0169), (2.0, 0.5, 1.0)])
def test_uncertainty_product(m, D, expected):
    assert scaling.uncertainty_product(m, D) == expected


@given(st.floats(1e-6, 1e6), st.floats(1e-6, 1e6))
def test_uncertainty_is_half_hbar(m, D):
    from qfin.inverse import ModelParams
    assert scaling.uncertainty_product(m, D) - ModelParams(m, D).hbar / 2 == 0.0


def test_report_to_dict():
    d = scaling.estimate_hurst(gbm_path(0.18, 0.0, 500, 1 / 52, seed=5)).to_dict()
    assert set(d) >= {"H", "D", "r2", "diffusion", "epsilon_tau", "lags"}
    assert isinstance(d["lags"], list)
