import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import least_squares

from ghostspec.errors import InvalidParameterError, ShapeError
from ghostspec.fitting import (
    Peak,
    fit_gaussians,
    initial_guess,
    jacobian,
    levenberg_marquardt,
    model,
    pack,
    resolving_power,
)
from ghostspec.spectral import FWHM_PER_SIGMA, Spectrum, WavelengthGrid
from oracles import central_diff_jacobian

GRID = WavelengthGrid(790.0, 0.05, 801)
X = GRID.centers


def test_jacobian_vs_central_differences():
    rng = np.random.default_rng(0)
    for _ in range(20):
        p = pack(rng.uniform(0, 0.1), [(rng.uniform(0.5, 2), rng.uniform(800, 820), rng.uniform(0.5, 3)),
                                      (rng.uniform(0.5, 2), rng.uniform(800, 820), rng.uniform(0.5, 3))])
        J = jacobian(X, p)
        Jfd = central_diff_jacobian(lambda q: model(X, q), p)
        rel = np.abs(J - Jfd).max() / np.abs(Jfd).max()
        assert rel < 1e-4


def test_single_peak_recovery_exact():
    p_true = pack(0.02, [(1.5, 810.3, 1.1)])
    s = Spectrum(GRID, model(X, p_true))
    fit = fit_gaussians(s, 1)
    assert fit.converged
    np.testing.assert_allclose(fit.params, p_true, rtol=1e-7)
    assert fit.peaks[0].fwhm == pytest.approx(1.1 * FWHM_PER_SIGMA, rel=1e-7)


def test_two_peak_matches_scipy_least_squares():
    rng = np.random.default_rng(3)
    p_true = pack(0.01, [(1.0, 808.5, 1.2), (0.7, 811.0, 1.0)])
    y = np.clip(model(X, p_true) + rng.normal(0, 0.01, X.size), 0, None)
    s = Spectrum(GRID, y)
    fit = fit_gaussians(s, 2)
    ref = least_squares(lambda q: model(X, q) - y, initial_guess(s, 2), jac=lambda q: jacobian(X, q),
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, method="lm")
    assert fit.converged
    assert fit.residual_norm == pytest.approx(np.linalg.norm(ref.fun), rel=1e-6)
    got = sorted(fit.params[1:].reshape(-1, 3).tolist(), key=lambda r: r[1])
    exp = sorted(ref.x[1:].reshape(-1, 3).tolist(), key=lambda r: r[1])
    np.testing.assert_allclose(got, exp, rtol=1e-5)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 2.0), st.floats(805, 815), st.floats(0.4, 3.0), st.floats(0.0, 0.2), st.integers(0, 2**31))
def test_cost_history_non_increasing(a, c, s, d, seed):
    rng = np.random.default_rng(seed)
    y = np.clip(model(X, pack(d, [(a, c, s)])) + rng.normal(0, 0.02, X.size), 0, None)
    fit = fit_gaussians(Spectrum(GRID, y), 1)
    h = np.array(fit.cost_history)
    assert np.all(np.diff(h) <= 0)
    assert fit.iterations <= 500
    assert all(p.sigma > 0 for p in fit.peaks)


def test_resolving_power_definition():
    from ghostspec.fitting import GaussianFitResult

    r = GaussianFitResult(0.0, (Peak(1, 808.5, 1.0), Peak(1, 811.5, 0.5)), 0.0, True, 1)
    assert resolving_power(r) == pytest.approx(2.0)
    with pytest.raises(InvalidParameterError):
        resolving_power(GaussianFitResult(0.0, (Peak(1, 810, 1.0),), 0.0, True, 1))


def test_input_validation():
    s = Spectrum(GRID, model(X, pack(0, [(1, 810, 1)])))
    with pytest.raises(InvalidParameterError):
        fit_gaussians(s, 3)
    with pytest.raises(ShapeError):
        fit_gaussians(Spectrum(WavelengthGrid(0, 1, 6), np.ones(6)), 2)
    with pytest.raises(InvalidParameterError):
        fit_gaussians(s, 1, init=[0, 1, 700, 1])
    with pytest.raises(InvalidParameterError):
        fit_gaussians(s, 1, init=[0, 1])


def test_non_convergence_is_reported():
    y = model(X, pack(0.0, [(1, 810, 1)]))
    p, conv, it, _ = levenberg_marquardt(X, y, pack(0.1, [(0.5, 805, 2)]), max_iter=2)
    assert not conv and it == 2
