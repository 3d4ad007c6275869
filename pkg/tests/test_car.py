import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ghostspec.car import CarPoint, car_from_counts, compute_car, fit_exp_decay
from ghostspec.detection import CoincidenceData
from ghostspec.errors import InsufficientDataError, InvalidParameterError, UnboundedCARError
from ghostspec.spectral import WavelengthGrid


def _data(aligned, shifted, power=1.0):
    d = CoincidenceData.empty(WavelengthGrid(800, 1, len(aligned)), power_density_mw_mm2=power)
    d.aligned_hist[:] = aligned
    d.shifted_hist[:] = shifted
    return d


def test_compute_car_exact_ratio():
    pt = compute_car(_data([3, 10, 7], [1, 2, 1], 2.5))
    assert pt.car == 20 / 4
    assert pt.car_err == pytest.approx(5 * math.sqrt(1 / 20 + 1 / 4))
    assert pt.power_density == 2.5 and pt.n_cc == 20 and pt.n_acc == 4


def test_car_edge_cases():
    with pytest.raises(UnboundedCARError, match="N_cc = 5"):
        car_from_counts(5, 0)
    pt = car_from_counts(0, 4)
    assert pt.car == 0.0 and pt.car_err == 0.25
    with pytest.raises(InvalidParameterError):
        car_from_counts(-1, 3)


@given(st.integers(1, 10**6), st.integers(1, 10**6))
def test_car_matches_hand_ratio(a, b):
    assert car_from_counts(a, b).car == a / b


def test_exp_fit_noiseless_recovery():
    A, P0 = 17.7, 31.58
    P = np.linspace(5, 100, 12)
    pts = [CarPoint(p, A * math.exp(-p / P0), 0.0) for p in P]
    fit = fit_exp_decay(pts)
    assert fit.A == pytest.approx(A, rel=1e-6)
    assert fit.P0 == pytest.approx(P0, rel=1e-6)
    assert fit.car_min == pytest.approx(A / math.e, rel=1e-9)
    assert fit.car_min == pytest.approx(6.51, abs=0.01)
    assert fit(P0) == pytest.approx(fit.car_min)


def test_exp_fit_weighted_matches_independent_lstsq():
    rng = np.random.default_rng(1)
    P = np.linspace(10, 100, 8)
    car = 12 * np.exp(-P / 40) * (1 + rng.normal(0, 0.02, P.size))
    err = 0.02 * car
    fit = fit_exp_decay([CarPoint(p, c, e) for p, c, e in zip(P, car, err)])
    # weighted least squares in ln space solved independently
    w = np.sqrt((car / err) ** 2)
    coef, *_ = np.linalg.lstsq(np.column_stack([np.ones_like(P), P]) * w[:, None], np.log(car) * w, rcond=None)
    assert fit.A == pytest.approx(math.exp(coef[0]), rel=1e-10)
    assert fit.P0 == pytest.approx(-1 / coef[1], rel=1e-10)
    assert np.all(np.diag(fit.covariance) > 0)


def test_exp_fit_tail_selection_and_errors():
    pts = [CarPoint(p, 10 * math.exp(-p / 20), 0.1) for p in (1, 2, 30, 40)]
    with pytest.raises(InsufficientDataError):
        fit_exp_decay(pts, tail_start=25)
    rising = [CarPoint(p, 1 + p, 0.1) for p in (1, 2, 3)]
    fit = fit_exp_decay(rising)
    assert not fit.decaying and math.isinf(fit.P0)
    assert fit.to_json_dict()["P0"] is None
    with pytest.raises(InvalidParameterError):
        fit_exp_decay([CarPoint(p, 1.0, e) for p, e in ((1, 0.0), (2, 0.1), (3, 0.1))])
