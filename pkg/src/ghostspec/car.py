"""Coincidence-to-accidental ratio and its exponential decay with pump power."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InsufficientDataError, InvalidParameterError, UnboundedCARError


@dataclass(frozen=True)
class CarPoint:
    power_density: float
    car: float
    car_err: float
    n_cc: Optional[int] = None
    n_acc: Optional[int] = None


def car_from_counts(n_cc: int, n_acc: int, power_density: float = math.nan) -> CarPoint:
    """CAR = N_cc / N_acc with independent-Poisson error propagation."""
    if n_cc < 0 or n_acc < 0:
        raise InvalidParameterError("counts must be non-negative")
    if n_acc == 0:
        raise UnboundedCARError(n_cc)
    car = n_cc / n_acc
    if n_cc == 0:
        err = 1.0 / n_acc
    else:
        err = car * math.sqrt(1.0 / n_cc + 1.0 / n_acc)
    return CarPoint(float(power_density), car, err, int(n_cc), int(n_acc))


def compute_car(data) -> CarPoint:
    """CAR of a run: aligned-window total over shifted-window total."""
    p = data.power_density_mw_mm2
    return car_from_counts(data.n_cc, data.n_acc, math.nan if p is None else p)


@dataclass(frozen=True)
class ExpDecayFit:
    """``CAR(P) = A * exp(-P / P0)``; ``car_min`` is the CAR at P = P0."""

    A: float
    P0: float
    car_min: float
    covariance: np.ndarray
    decaying: bool = True
    n_points: int = 0

    def __call__(self, power):
        return self.A * np.exp(-np.asarray(power) / self.P0)

    def to_json_dict(self) -> dict:
        cov = [[_finite_or_none(v) for v in row] for row in np.asarray(self.covariance)]
        return {
            "A": self.A,
            "P0": _finite_or_none(self.P0),
            "car_min": self.car_min,
            "covariance": cov,
            "decaying": self.decaying,
            "n_points": self.n_points,
        }


def _finite_or_none(v):
    v = float(v)
    return v if math.isfinite(v) else None


def fit_exp_decay(points: Sequence[CarPoint], tail_start: float = 0.0) -> ExpDecayFit:
    """Weighted straight-line fit of ln(CAR) against power over the tail.

    Weights are ``(car / car_err)**2`` (unit weights when every error is 0).
    A non-negative slope means the tail does not decay: the result then has
    ``decaying=False`` and ``P0 = inf``.
    """
    tail = [p for p in points if p.power_density >= tail_start]
    if len(tail) < 3:
        raise InsufficientDataError(f"need >= 3 points with power >= {tail_start}, got {len(tail)}")
    P = np.array([p.power_density for p in tail], dtype=np.float64)
    car = np.array([p.car for p in tail], dtype=np.float64)
    err = np.array([p.car_err for p in tail], dtype=np.float64)
    if np.any(car <= 0):
        raise InvalidParameterError("CAR values in the fitted tail must be positive")
    y = np.log(car)
    if np.all(err > 0):
        w = (car / err) ** 2
    elif np.all(err == 0):
        w = np.ones_like(car)
    else:
        raise InvalidParameterError("car_err must be all positive or all zero")

    X = np.column_stack([np.ones_like(P), P])
    XtW = X.T * w
    cov_lin = np.linalg.inv(XtW @ X)
    intercept, slope = cov_lin @ (XtW @ y)
    A = math.exp(intercept)
    if slope >= 0:
        return ExpDecayFit(A, math.inf, A / math.e, np.full((2, 2), np.nan), False, len(tail))
    P0 = -1.0 / slope
    # delta method: dA/dc = A, dP0/db = 1/b**2
    Jt = np.array([[A, 0.0], [0.0, 1.0 / slope**2]])
    cov = Jt @ cov_lin @ Jt.T
    return ExpDecayFit(A, P0, A / math.e, cov, True, len(tail))
