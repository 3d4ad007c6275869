"""Wavelength grids, spectra and the phase-matching wavelength algebra.

All wavelengths are vacuum wavelengths in nm.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import savgol_filter

from .errors import (
    DataIOError,
    DomainError,
    EmptySpectrumError,
    GridMismatchError,
    InvalidParameterError,
    ShapeError,
)

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))

DEFAULT_SG_WINDOW = 11
DEFAULT_SG_ORDER = 3


@dataclass(frozen=True)
class WavelengthGrid:
    """Uniform grid of bin centers ``start_nm + i * step_nm``."""

    start_nm: float
    step_nm: float
    n_bins: int

    def __post_init__(self):
        if not (math.isfinite(self.start_nm) and math.isfinite(self.step_nm)):
            raise InvalidParameterError("grid start/step must be finite")
        if self.step_nm <= 0:
            raise InvalidParameterError("grid step_nm must be > 0")
        if int(self.n_bins) != self.n_bins or self.n_bins < 2:
            raise InvalidParameterError("grid n_bins must be an integer >= 2")
        object.__setattr__(self, "n_bins", int(self.n_bins))

    @classmethod
    def spanning(cls, lo_nm: float, hi_nm: float, step_nm: float) -> "WavelengthGrid":
        """Grid whose first and last bin centers are ``lo_nm`` and (about) ``hi_nm``."""
        n = int(round((hi_nm - lo_nm) / step_nm)) + 1
        return cls(float(lo_nm), float(step_nm), n)

    @property
    def centers(self) -> np.ndarray:
        return self.start_nm + self.step_nm * np.arange(self.n_bins)

    @property
    def stop_nm(self) -> float:
        """Center of the last bin."""
        return self.start_nm + self.step_nm * (self.n_bins - 1)

    @property
    def edges(self) -> np.ndarray:
        return self.start_nm + self.step_nm * (np.arange(self.n_bins + 1) - 0.5)

    @property
    def lo_edge(self) -> float:
        return self.start_nm - 0.5 * self.step_nm

    @property
    def hi_edge(self) -> float:
        return self.stop_nm + 0.5 * self.step_nm

    def index_of(self, lambda_nm):
        """Bin index containing ``lambda_nm`` (may fall outside ``[0, n_bins)``)."""
        return np.floor((np.asarray(lambda_nm) - self.lo_edge) / self.step_nm).astype(np.int64)

    def to_dict(self) -> dict:
        return {"start_nm": self.start_nm, "step_nm": self.step_nm, "n_bins": self.n_bins}


class SpectrumKind(str, enum.Enum):
    COUNTS = "counts"
    DENSITY = "density"


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Non-negative values on a wavelength grid.

    ``values`` is stored as a read-only float64 copy.
    """

    grid: WavelengthGrid
    values: np.ndarray
    kind: SpectrumKind = SpectrumKind.COUNTS

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.shape != (self.grid.n_bins,):
            raise ShapeError(f"expected {self.grid.n_bins} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidParameterError("spectrum values must be finite")
        if np.any(v < 0):
            raise InvalidParameterError("spectrum values must be non-negative")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "kind", SpectrumKind(self.kind))

    @property
    def wavelengths(self) -> np.ndarray:
        return self.grid.centers

    def area(self) -> float:
        return float(np.sum(self.values) * self.grid.step_nm)

    def scaled(self, factor: float) -> "Spectrum":
        return Spectrum(self.grid, self.values * factor, self.kind)

    def to_csv(self, path=None) -> str:
        """Write ``wavelength_nm,value`` rows; returns the text as well."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["wavelength_nm", "value"])
        for lam, val in zip(self.grid.centers, self.values):
            w.writerow([repr(float(lam)), repr(float(val))])
        text = buf.getvalue()
        if path is not None:
            try:
                Path(path).write_text(text, encoding="utf-8")
            except OSError as exc:
                raise DataIOError(str(exc)) from exc
        return text

    @classmethod
    def from_csv(cls, source, kind=SpectrumKind.COUNTS) -> "Spectrum":
        """Read a spectrum CSV from a path or from CSV text.

        The wavelength column must be uniformly spaced.
        """
        try:
            if isinstance(source, Path) or ("\n" not in str(source) and Path(source).exists()):
                text = Path(source).read_text(encoding="utf-8")
            else:
                text = str(source)
        except OSError as exc:
            raise DataIOError(str(exc)) from exc
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != ["wavelength_nm", "value"]:
            raise DataIOError("spectrum CSV must start with header 'wavelength_nm,value'")
        try:
            data = np.array([[float(a), float(b)] for a, b in (r for r in rows[1:] if r)])
        except ValueError as exc:
            raise DataIOError(f"malformed spectrum CSV: {exc}") from exc
        if data.shape[0] < 2:
            raise DataIOError("spectrum CSV needs at least two rows")
        lam = data[:, 0]
        steps = np.diff(lam)
        step = float(np.mean(steps))
        if step <= 0 or np.max(np.abs(steps - step)) > 1e-6 * max(1.0, abs(step)):
            raise DataIOError("spectrum CSV wavelengths must be uniformly increasing")
        grid = WavelengthGrid(float(lam[0]), step, len(lam))
        return cls(grid, data[:, 1], kind)


@dataclass(frozen=True)
class PumpSpec:
    lambda_p_nm: float = 532.0
    bandwidth_fwhm_nm: float = 0.23
    rep_rate_hz: float = 4.0e7

    def __post_init__(self):
        for name in ("lambda_p_nm", "bandwidth_fwhm_nm", "rep_rate_hz"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise InvalidParameterError(f"{name} must be > 0")


def partner_wavelength(lambda_nm, lambda_p_nm):
    """Wavelength of the energy-conserving partner photon.

    Solves ``1/lambda_p = 1/lambda + 1/partner``. Works on scalars and arrays.
    """
    lam = np.asarray(lambda_nm, dtype=np.float64)
    lp = float(lambda_p_nm)
    if lp <= 0 or np.any(lam <= lp):
        raise DomainError("partner wavelength needs 0 < lambda_p_nm < lambda_nm")
    out = 1.0 / (1.0 / lp - 1.0 / lam)
    return float(out) if out.ndim == 0 else out


def convert_bandwidth(delta_nm, lambda_from_nm, lambda_to_nm):
    """Map a small wavelength interval from one arm to the partner arm.

    First-order Jacobian of the phase-matching relation: |d lambda_to / d lambda_from|
    equals ``(lambda_to / lambda_from) ** 2``.
    """
    vals = np.asarray([delta_nm, lambda_from_nm, lambda_to_nm], dtype=np.float64)
    if np.any(~np.isfinite(vals)) or np.any(vals <= 0):
        raise DomainError("convert_bandwidth needs positive arguments")
    return float(delta_nm) * (float(lambda_to_nm) / float(lambda_from_nm)) ** 2


def gaussian(x, center, fwhm):
    """Unit-peak Gaussian profile."""
    sigma = fwhm / FWHM_PER_SIGMA
    return np.exp(-0.5 * ((np.asarray(x) - center) / sigma) ** 2)


def gaussian_spectrum(grid: WavelengthGrid, center_nm: float, fwhm_nm: float) -> Spectrum:
    """Area-normalized Gaussian density sampled at the bin centers."""
    return normalize_area(Spectrum(grid, gaussian(grid.centers, center_nm, fwhm_nm)))


def savgol_smooth(s: Spectrum, window: int = DEFAULT_SG_WINDOW, order: int = DEFAULT_SG_ORDER) -> Spectrum:
    """Savitzky-Golay smoothing on the spectrum's own grid.

    The first and last ``(window - 1) // 2`` bins are evaluated from a polynomial
    fitted to the first/last full window. Negative outputs are clamped to 0.
    """
    if int(window) != window or int(order) != order:
        raise InvalidParameterError("window and order must be integers")
    window, order = int(window), int(order)
    if order < 0:
        raise InvalidParameterError("order must be >= 0")
    if window % 2 == 0:
        raise InvalidParameterError("window must be odd")
    if window < order + 2:
        raise InvalidParameterError("window must be >= order + 2")
    if window > s.grid.n_bins:
        raise InvalidParameterError("window must not exceed the number of bins")
    out = savgol_filter(s.values, window, order, mode="interp")
    return Spectrum(s.grid, np.clip(out, 0.0, None), s.kind)


def empirical_fwhm(s: Spectrum) -> float:
    """Full width at half maximum from linear interpolation of the half-max crossings.

    The crossings are the ones nearest the (first) global maximum. Raises
    ``ShapeError`` when the maximum sits on the boundary or a crossing is missing.
    """
    v = s.values
    i = int(np.argmax(v))
    peak = v[i]
    if peak <= 0:
        raise ShapeError("spectrum has no positive maximum")
    if i == 0 or i == len(v) - 1:
        raise ShapeError("maximum lies on the grid boundary")
    half = 0.5 * peak
    x = s.grid.centers

    left = i
    while left > 0 and v[left - 1] >= half:
        left -= 1
    if left == 0:
        raise ShapeError("no half-maximum crossing on the left")
    # crossing between left-1 (below) and left (above)
    x_l = x[left - 1] + (half - v[left - 1]) / (v[left] - v[left - 1]) * s.grid.step_nm

    # continue right through any plateau at the top
    right = i
    n = len(v)
    while right < n - 1 and v[right + 1] >= half:
        right += 1
    if right == n - 1:
        raise ShapeError("no half-maximum crossing on the right")
    x_r = x[right] + (v[right] - half) / (v[right] - v[right + 1]) * s.grid.step_nm
    return float(x_r - x_l)


def normalize_area(s: Spectrum) -> Spectrum:
    """Scale to unit area (``sum(values) * step_nm == 1``)."""
    total = float(np.sum(s.values))
    if total <= 0:
        raise EmptySpectrumError("cannot normalize an all-zero spectrum")
    return Spectrum(s.grid, s.values / (total * s.grid.step_nm), SpectrumKind.DENSITY)


def require_same_grid(a: Spectrum, b: Spectrum) -> None:
    ga, gb = a.grid, b.grid
    if ga.n_bins != gb.n_bins or not (
        math.isclose(ga.start_nm, gb.start_nm, rel_tol=0, abs_tol=1e-9 * ga.step_nm)
        and math.isclose(ga.step_nm, gb.step_nm, rel_tol=1e-12)
    ):
        raise GridMismatchError("spectra live on different wavelength grids")


def l1_distance(a: Spectrum, b: Spectrum) -> float:
    """Integrated absolute difference of two densities on the same grid."""
    require_same_grid(a, b)
    return float(np.sum(np.abs(a.values - b.values)) * a.grid.step_nm)


def flatness(s: Spectrum) -> float:
    """``(max - min) / mean``; 0 for a perfectly flat spectrum."""
    mean = float(np.mean(s.values))
    if mean <= 0:
        raise EmptySpectrumError("flatness undefined for an all-zero spectrum")
    return float((np.max(s.values) - np.min(s.values)) / mean)
