import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghostspec import cli
from ghostspec.analysis import map_to_bucket_axis, reconstruct_ghost, sweep_resolving_power
from ghostspec.car import car_from_counts
from ghostspec.config import config_from_dict, parse_config
from ghostspec.detection import (
    DetectionConfig,
    DetectorModel,
    FilterProfile,
    GateState,
    jsd_for,
    run_experiment,
    simulate_gate,
)
from ghostspec.fitting import GaussianFitResult, Peak, fit_gaussians, model, pack, resolving_power
from ghostspec.source import SourceModel, make_stream
from ghostspec.spectral import FWHM_PER_SIGMA, Spectrum, WavelengthGrid, gaussian_spectrum, partner_wavelength

GRID = WavelengthGrid(770.0, 0.25, 321)


@given(st.integers(1, 10**5), st.integers(1, 10**5), st.integers(2, 1000))
def test_car_scale_invariance(a, b, k):
    p, q = car_from_counts(a, b), car_from_counts(k * a, k * b)
    assert q.car == pytest.approx(p.car, rel=1e-12)
    assert q.car_err == pytest.approx(p.car_err / np.sqrt(k), rel=1e-12)


@given(st.floats(-50, 50), st.floats(0.1, 3), st.floats(0.1, 3), st.floats(0, 5))
def test_resolving_power_invariances(shift, s1, s2, d):
    a = GaussianFitResult(0.0, (Peak(1, 810.0, s1), Peak(1, 810.0 + d, s2)), 0.0, True, 1)
    b = GaussianFitResult(0.0, (Peak(1, 810.0 + d + shift, s2), Peak(1, 810.0 + shift, s1)), 0.0, True, 1)
    assert resolving_power(b) == pytest.approx(resolving_power(a), rel=1e-9, abs=1e-9)
    assert resolving_power(a) >= 0


def test_two_gaussians_three_nm_apart_recovered():
    g = WavelengthGrid(790.0, 0.1, 401)
    s = Spectrum(g, model(g.centers, pack(0.0, [(1, 808.5, 1.19), (1, 811.5, 1.19)])))
    fit = fit_gaussians(s, 2)
    assert [p.center for p in fit.peaks] == pytest.approx([808.5, 811.5], abs=0.01)
    assert [p.sigma for p in fit.peaks] == pytest.approx([1.19, 1.19], abs=0.01)


def test_sweep_row_properties():
    source = gaussian_spectrum(GRID, 810, 25)
    m = sweep_resolving_power([0.5, 3.0], [0.0, 0.2, 0.3], 2.8, source)
    assert m.rp[0, 0] < 1 and m.crossing(0) == 0.0
    assert m.rp[1, 0] == pytest.approx(3 / (2 * 2.8 / FWHM_PER_SIGMA), abs=1e-6)
    assert m.rp[1, 2] <= m.rp[1, 1]


@settings(max_examples=20, deadline=None)
@given(st.floats(780, 840), st.floats(0.5, 20))
def test_bucket_mapping_preserves_area(center, fwhm):
    s = gaussian_spectrum(GRID, center, fwhm)
    assert map_to_bucket_axis(s, 532.0).area() == pytest.approx(s.area(), rel=1e-6)


def test_gate_no_light_no_clicks():
    src = SourceModel()
    cfg = DetectionConfig(DetectorModel(dark_prob_per_gate=0.0), DetectorModel(dark_prob_per_gate=0.0))
    jsd = jsd_for(src, cfg.spect_grid)
    rng = make_stream(0, 0)
    st_ = GateState()
    assert not any(simulate_gate(src, jsd, cfg, 0.0, rng, st_).bucket_click for _ in range(2000))


def test_dark_only_click_rate():
    d = 0.01
    cfg = DetectionConfig(DetectorModel(dark_prob_per_gate=d))
    data = run_experiment(SourceModel(), cfg, 0.0, 1_000_000, 12)
    assert abs(data.singles_bucket / 1e6 - d) <= 3 * np.sqrt(d / 1e6)


def test_forced_pair_clicks_iff_inside_band():
    # narrow correlation and a tophat band: bucket click only when the partner lies in band
    src = SourceModel(correlation_width_nm=0.01)
    perfect = DetectorModel(efficiency=1.0, dark_prob_per_gate=0.0)
    cfg = DetectionConfig(perfect, perfect, FilterProfile(1550, 10, "tophat", 1.0))
    jsd = jsd_for(src, cfg.spect_grid)
    rng = make_stream(1, 0)
    lo, hi = 1545.0, 1555.0
    for _ in range(3000):
        o = simulate_gate(src, jsd, cfg, 0.0, rng, n_pairs=1)
        lam_s = cfg.spect_grid.centers[o.spect_pixel]
        lam_b = partner_wavelength(lam_s, 532.0)
        margin = 2 * cfg.spect_grid.step_nm * (1550 / 810) ** 2
        if lo + margin < lam_b < hi - margin:
            assert o.bucket_click
        elif lam_b < lo - margin or lam_b > hi + margin:
            assert not o.bucket_click


def test_low_flux_no_darks_all_true_pairs():
    cfg = DetectionConfig(DetectorModel(dark_prob_per_gate=0.0), DetectorModel(dark_prob_per_gate=0.0))
    d = run_experiment(SourceModel(), cfg, 0.01, 2_000_000, 4)
    assert d.n_cc > 0 and d.class_tally["true_pair"] == d.n_cc


def test_shifted_rate_is_product_of_singles():
    d = run_experiment(SourceModel(), DetectionConfig(), 40.0, 2_000_000, 5)
    n = d.n_gates
    expect = d.singles_spect_hist.sum() / n * d.singles_bucket / n * n
    assert abs(d.n_acc - expect) <= 3 * np.sqrt(expect)


def test_aligned_minus_shifted_nonnegative_in_expectation():
    d = run_experiment(SourceModel(), DetectionConfig(), 20.0, 3_000_000, 6)
    diff = d.aligned_hist.astype(float) - d.shifted_hist
    tol = 3 * np.sqrt(d.aligned_hist + d.shifted_hist + 1.0)
    assert np.all(diff >= -tol)


def _ghost(tmp_path, name, yaml_text, power, *flags):
    f = tmp_path / f"{name}.yaml"
    f.write_text(yaml_text)
    assert cli.main(["ghost", "--config", str(f), "--power", str(power), "--out", str(tmp_path / name), *flags]) == 0
    return json.loads((tmp_path / name / "ghost.json").read_text())


def test_ghost_regimes_end_to_end(tmp_path):
    base = "n_gates: 3000000\nseed: 2\n"
    quiet = _ghost(tmp_path, "neg", base + "detection: {bucket: {dark_prob_per_gate: 1.0e-5}, spect: {dark_prob_per_gate: 1.0e-5}}\n", 2.0)
    assert quiet["regime"] == "negligible"
    assert quiet["ghost_fwhm_nm"] == pytest.approx(2.73, rel=0.15)
    col = _ghost(tmp_path, "col", base + "detection: {bucket: {dark_prob_per_gate: 0.0}, spect: {dark_prob_per_gate: 0.0}}\n", 80.0, "--no-subtract")
    assert col["regime"] == "colored"
    # multi-pair accidentals share the source spectrum; without subtraction they broaden the ghost
    assert col["ghost_fwhm_nm"] > quiet["ghost_fwhm_nm"]
    white = _ghost(tmp_path, "wh", base + "detection: {bucket: {dark_prob_per_gate: 0.03}, spect: {dark_prob_per_gate: 0.03}}\n", 2.0)
    assert white["regime"] == "white"
    assert white["ghost_fwhm_nm"] == pytest.approx(quiet["ghost_fwhm_nm"], rel=0.10)


def test_car_sweep_short_tail_diagnostic(tmp_path):
    f = tmp_path / "c.yaml"
    f.write_text("n_gates: 1000\npower_densities: [1.0, 2.0, 3.0]\n")
    assert cli.main(["car-sweep", "--config", str(f), "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "car_sweep.json").read_text())
    assert rep["fit"] is None and "need >= 3 points" in rep["fit_diagnostic"]
    assert len((tmp_path / "o" / "car_sweep.csv").read_text().splitlines()) == 4


def test_embedded_config_reproduces_outputs(tmp_path):
    f = tmp_path / "c.yaml"
    f.write_text("n_gates: 400000\nseed: 11\npower_densities: [5.0, 20.0, 40.0, 60.0]\n")
    assert cli.main(["car-sweep", "--config", str(f), "--out", str(tmp_path / "a")]) == 0
    rep = json.loads((tmp_path / "a" / "car_sweep.json").read_text())
    g = tmp_path / "resolved.json"
    g.write_text(json.dumps(rep["config"]))
    assert config_from_dict(rep["config"]) == parse_config(f.read_text())
    assert cli.main(["car-sweep", "--config", str(g), "--out", str(tmp_path / "b")]) == 0
    for name in ("car_sweep.csv", "car_sweep.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_reconstruct_mapped_area():
    d = run_experiment(SourceModel(), DetectionConfig(), 5.0, 500_000, 9)
    m = reconstruct_ghost(d, map_to_bucket_arm=True)
    assert m.area() == pytest.approx(1.0, rel=1e-6)
