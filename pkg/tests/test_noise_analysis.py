import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghostspec.analysis import (
    area_fraction,
    fitted_fwhm,
    map_to_bucket_axis,
    reconstruct_ghost,
    sweep_resolving_power,
    two_peak_ghost,
)
from ghostspec.detection import CoincidenceData, DetectionConfig, DetectorModel, jsd_for, run_experiment
from ghostspec.errors import EmptySpectrumError, GridMismatchError, InvalidParameterError
from ghostspec.noise import NoiseKind, NoiseMix, Regime, classify_noise, mix_colored, mix_white, noise_spectrum
from ghostspec.source import SourceModel, source_marginal
from ghostspec.spectral import (
    FWHM_PER_SIGMA,
    WavelengthGrid,
    convert_bandwidth,
    empirical_fwhm,
    flatness,
    gaussian_spectrum,
    partner_wavelength,
)

GRID = WavelengthGrid(770.0, 0.25, 321)
GHOST = gaussian_spectrum(GRID, 810, 2.8)
SOURCE = gaussian_spectrum(GRID, 810, 25)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1))
def test_mixtures_stay_normalized(n):
    for s in (mix_colored(GHOST, SOURCE, n), mix_white(GHOST, n)):
        assert s.area() == pytest.approx(1.0, rel=1e-12)
        assert np.all(s.values >= 0)


def test_mixture_endpoints_and_validation():
    np.testing.assert_allclose(mix_colored(GHOST, SOURCE, 0).values, GHOST.values)
    np.testing.assert_allclose(mix_colored(GHOST, SOURCE, 1).values, SOURCE.values)
    assert flatness(mix_white(GHOST, 1)) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(InvalidParameterError):
        mix_colored(GHOST, SOURCE, 1.2)
    with pytest.raises(GridMismatchError):
        mix_colored(GHOST, gaussian_spectrum(WavelengthGrid(770, 0.5, 161), 810, 25), 0.3)
    m = NoiseMix("colored", 0.3, SOURCE)
    np.testing.assert_allclose(m.apply(GHOST).values, mix_colored(GHOST, SOURCE, 0.3).values)
    assert NoiseMix(NoiseKind.WHITE, 0.2).apply(GHOST).area() == pytest.approx(1.0)
    with pytest.raises(InvalidParameterError):
        NoiseMix("colored", 0.3)


def test_colored_broadening_monotone():
    w = [empirical_fwhm(mix_colored(GHOST, SOURCE, n)) for n in np.linspace(0, 1, 11)]
    assert all(b > a for a, b in zip(w, w[1:]))
    assert w[0] == pytest.approx(2.8, rel=0.01)
    assert w[-1] == pytest.approx(25, rel=0.01)


def test_area_fraction_identity():
    g2 = two_peak_ghost(GRID, 2.0, 2.8)
    for n in (0.0, 0.2, 0.7, 1.0):
        na = area_fraction(n, g2, SOURCE)
        lhs = mix_colored(g2, SOURCE, na).values
        rhs = (1 - n) * g2.values / g2.values.max() + n * SOURCE.values / SOURCE.values.max()
        np.testing.assert_allclose(lhs, rhs / (rhs.sum() * GRID.step_nm), rtol=1e-10, atol=1e-15)


def test_map_to_bucket_axis_preserves_area_and_width():
    m = map_to_bucket_axis(GHOST, 532.0)
    assert m.area() == pytest.approx(1.0, rel=1e-9)
    center = m.grid.centers[np.argmax(m.values)]
    assert center == pytest.approx(partner_wavelength(810, 532), abs=m.grid.step_nm)
    assert empirical_fwhm(m) == pytest.approx(convert_bandwidth(2.8, 810, center), rel=0.02)


def _cfg(dark):
    d = DetectorModel(dark_prob_per_gate=dark)
    return DetectionConfig(d, d)


def test_reconstruct_ghost_recovers_filter_image():
    src = SourceModel()
    d = run_experiment(src, _cfg(1e-3), 5.0, 3_000_000, 1)
    g = reconstruct_ghost(d)
    fwhm, center = fitted_fwhm(g)
    assert fwhm == pytest.approx(convert_bandwidth(10, 1550, 810), rel=0.08)
    assert center == pytest.approx(810, abs=0.25)
    raw = reconstruct_ghost(d, subtract_accidentals=False, smooth=None)
    assert raw.area() == pytest.approx(1.0)
    mapped = reconstruct_ghost(d, map_to_bucket_arm=True)
    assert mapped.grid.start_nm > 1400


def test_reconstruct_and_noise_spectrum_empty():
    d = CoincidenceData.empty(GRID)
    with pytest.raises(EmptySpectrumError):
        reconstruct_ghost(d)
    with pytest.raises(EmptySpectrumError):
        noise_spectrum(d)
    rep = classify_noise(d)
    assert rep.regime is Regime.NEGLIGIBLE and rep.flatness is None


def test_classify_regimes():
    src = SourceModel()
    marg = source_marginal(jsd_for(src, GRID), "spect")
    white = run_experiment(src, _cfg(5e-2), 1.0, 1_000_000, 2)
    rep = classify_noise(white, source=marg)
    assert rep.regime is Regime.WHITE and rep.n_white > rep.n_colored
    colored = run_experiment(src, _cfg(0.0), 60.0, 1_000_000, 3)
    rep = classify_noise(colored, source=marg)
    assert rep.regime is Regime.COLORED and rep.source_distance_l1 < 0.1
    quiet = run_experiment(src, _cfg(1e-4), 2.0, 1_000_000, 4)
    assert classify_noise(quiet).regime is Regime.NEGLIGIBLE
    assert set(rep.to_json_dict()) >= {"car", "regime", "n_white", "n_colored"}


def test_sweep_noiseless_rp_and_validation():
    seps = [0.5, 1.0, 2.0, 3.0]
    m = sweep_resolving_power(seps, [0.0, 0.3], 2.8, SOURCE)
    sigma = 2.8 / FWHM_PER_SIGMA
    np.testing.assert_allclose(m.rp[:, 0], np.array(seps) / (2 * sigma), atol=1e-6)
    assert m.rp.shape == (4, 2)
    assert m.to_csv().splitlines()[0] == "separation_nm,noise_fraction,rp,resolvable"
    with pytest.raises(InvalidParameterError):
        sweep_resolving_power([0.0], [0.1], 2.8, SOURCE)
    with pytest.raises(InvalidParameterError):
        sweep_resolving_power([1.0], [1.1], 2.8, SOURCE)
    with pytest.raises(InvalidParameterError):
        sweep_resolving_power([1.0], [0.1], 2.8, SOURCE, noise_scale="height")


def test_sweep_rp_falls_with_noise_and_workers_agree():
    fr = np.round(np.arange(0, 0.55, 0.05), 2)
    a = sweep_resolving_power([2.0, 3.0], fr, 2.8, SOURCE)
    b = sweep_resolving_power([2.0, 3.0], fr, 2.8, SOURCE, workers=4)
    np.testing.assert_array_equal(a.rp, b.rp)
    assert np.all(np.diff(a.rp, axis=1) < 0.05)
    assert a.rp[1, -1] < a.rp[1, 0]
