"""White and colored noise: analytic injection and extraction from simulated runs."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from typing import Optional

from .car import car_from_counts
from .detection import CoincidenceData
from .errors import EmptySpectrumError, InvalidParameterError
from .spectral import (
    DEFAULT_SG_ORDER,
    DEFAULT_SG_WINDOW,
    Spectrum,
    flatness,
    l1_distance,
    normalize_area,
    require_same_grid,
    savgol_smooth,
)

DEFAULT_CAR_MIN = 6.5
FLATNESS_THRESHOLD = 0.5
SOURCE_DISTANCE_THRESHOLD = 0.1


class NoiseKind(str, enum.Enum):
    WHITE = "white"
    COLORED = "colored"


class Regime(str, enum.Enum):
    WHITE = "white"
    COLORED = "colored"
    NEGLIGIBLE = "negligible"


@dataclass(frozen=True)
class NoiseMix:
    kind: NoiseKind
    fraction: float
    reference: Optional[Spectrum] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        _check_fraction(self.fraction)
        if self.kind is NoiseKind.COLORED:
            if self.reference is None:
                raise InvalidParameterError("colored noise needs a reference spectrum")
            object.__setattr__(self, "reference", normalize_area(self.reference))

    def apply(self, ghost: Spectrum) -> Spectrum:
        if self.kind is NoiseKind.WHITE:
            return mix_white(ghost, self.fraction)
        return mix_colored(ghost, self.reference, self.fraction)


def _check_fraction(n):
    if not (0.0 <= n <= 1.0):
        raise InvalidParameterError("noise fraction must be in [0, 1]")


def mix_colored(ghost: Spectrum, source: Spectrum, n: float) -> Spectrum:
    """``(1 - n) * ghost + n * source`` with both densities area-normalized first."""
    require_same_grid(ghost, source)
    _check_fraction(n)
    g = normalize_area(ghost).values
    s = normalize_area(source).values
    return normalize_area(Spectrum(ghost.grid, (1.0 - n) * g + n * s))


def mix_white(ghost: Spectrum, n: float) -> Spectrum:
    """Convex mixture of the normalized ghost with a flat density on its grid."""
    _check_fraction(n)
    g = normalize_area(ghost).values
    flat = 1.0 / (ghost.grid.n_bins * ghost.grid.step_nm)
    return normalize_area(Spectrum(ghost.grid, (1.0 - n) * g + n * flat))


def noise_spectrum(data: CoincidenceData, window: int = DEFAULT_SG_WINDOW, order: int = DEFAULT_SG_ORDER) -> Spectrum:
    """Normalized, smoothed spectrum of the shifted-window (accidental) coincidences."""
    if data.n_acc <= 0:
        raise EmptySpectrumError("no shifted-window coincidences recorded")
    raw = normalize_area(Spectrum(data.grid, data.shifted_hist))
    return normalize_area(savgol_smooth(raw, window, order))


@dataclass(frozen=True)
class NoiseReport:
    car: float
    car_err: float
    regime: Regime
    n_white: float
    n_colored: float
    flatness: Optional[float] = None
    source_distance_l1: Optional[float] = None

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["regime"] = self.regime.value
        for k in ("car", "car_err"):
            if d[k] is not None and not math.isfinite(d[k]):
                d[k] = None
        return d


def classify_noise(
    data: CoincidenceData,
    car_min: float = DEFAULT_CAR_MIN,
    source: Optional[Spectrum] = None,
    window: int = DEFAULT_SG_WINDOW,
    order: int = DEFAULT_SG_ORDER,
) -> NoiseReport:
    """Assign a run to the negligible, white or colored noise regime.

    Negligible when CAR >= ``car_min``; otherwise white when dark-count
    coincidences outnumber multi-pair ones, colored when not. Noise fractions
    are class tallies over all aligned coincidences. When ``source`` is given
    the L1 distance between the noise spectrum and it is reported too.
    """
    n_cc, n_acc = data.n_cc, data.n_acc
    if n_acc > 0:
        pt = car_from_counts(n_cc, n_acc)
        car, car_err = pt.car, pt.car_err
    else:
        car, car_err = math.inf, math.nan
    tally = data.class_tally
    if car >= car_min:
        regime = Regime.NEGLIGIBLE
    elif tally["dark_involved"] > tally["multipair_accidental"]:
        regime = Regime.WHITE
    else:
        regime = Regime.COLORED
    n_white = tally["dark_involved"] / n_cc if n_cc else 0.0
    n_colored = tally["multipair_accidental"] / n_cc if n_cc else 0.0
    flat = dist = None
    if n_acc > 0:
        ns = noise_spectrum(data, window, order)
        flat = flatness(ns)
        if source is not None:
            dist = l1_distance(ns, normalize_area(source))
    return NoiseReport(car, car_err, regime, n_white, n_colored, flat, dist)
