"""Photon-pair source: pair statistics per pump pulse and the joint spectral density.

The joint density is Gaussian along the broad (energy anti-correlated) direction
and narrow across it, with the narrow width set by the pump bandwidth.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import ndtr

from .errors import GridCoverageError, InvalidParameterError
from .spectral import (
    FWHM_PER_SIGMA,
    PumpSpec,
    Spectrum,
    WavelengthGrid,
    convert_bandwidth,
    normalize_area,
    partner_wavelength,
)

RandomStream = np.random.Generator


def make_stream(seed: int, *key: int) -> RandomStream:
    """Independent PCG64 stream for ``(seed, *key)``.

    This is the only splitting rule used in the package: the stream for
    block ``b`` of a run seeded with ``seed`` is ``make_stream(seed, b)``.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))))


@dataclass(frozen=True)
class SourceModel:
    pump: PumpSpec = field(default_factory=PumpSpec)
    center_spect_nm: float = 810.0
    jsd_marginal_fwhm_nm: float = 25.0
    # FWHM of the spectrometer-arm wavelength at fixed bucket-arm wavelength;
    # None means "pump bandwidth mapped onto the spectrometer arm".
    correlation_width_nm: Optional[float] = None
    brightness_coeff: float = 0.01

    def __post_init__(self):
        if self.correlation_width_nm is None:
            object.__setattr__(
                self,
                "correlation_width_nm",
                convert_bandwidth(self.pump.bandwidth_fwhm_nm, self.pump.lambda_p_nm, self.center_spect_nm),
            )
        for name in ("center_spect_nm", "jsd_marginal_fwhm_nm", "correlation_width_nm", "brightness_coeff"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise InvalidParameterError(f"{name} must be > 0")
        if self.center_spect_nm <= self.pump.lambda_p_nm:
            raise InvalidParameterError("center_spect_nm must be longer than the pump wavelength")

    @property
    def center_bucket_nm(self) -> float:
        return partner_wavelength(self.center_spect_nm, self.pump.lambda_p_nm)

    @property
    def marginal_sigma_nm(self) -> float:
        return self.jsd_marginal_fwhm_nm / FWHM_PER_SIGMA


def mean_pairs_per_pulse(power_density_mw_mm2: float, model: SourceModel) -> float:
    """Mean number of pairs per pump pulse; linear in pump power density."""
    if not power_density_mw_mm2 >= 0:
        raise InvalidParameterError("power density must be >= 0")
    return model.brightness_coeff * float(power_density_mw_mm2)


def sample_pair_count(mu: float, rng: RandomStream, size=None):
    """Poisson-distributed number of pairs emitted in one pulse (or ``size`` pulses)."""
    if not mu >= 0:
        raise InvalidParameterError("mu must be >= 0")
    return rng.poisson(mu, size)


def default_bucket_grid(model: SourceModel, grid_spect: WavelengthGrid) -> WavelengthGrid:
    """Bucket-arm grid matched to a spectrometer grid.

    Covers the partner image of the spectrometer grid plus 5 conditional
    widths each side, with half the Jacobian-mapped pixel size.
    """
    lp = model.pump.lambda_p_nm
    hi = partner_wavelength(grid_spect.lo_edge, lp)
    lo = partner_wavelength(grid_spect.hi_edge, lp)
    c_b = model.center_bucket_nm
    corr_b = convert_bandwidth(model.correlation_width_nm, model.center_spect_nm, hi) / FWHM_PER_SIGMA
    step = 0.5 * convert_bandwidth(grid_spect.step_nm, model.center_spect_nm, c_b)
    margin = 5.0 * corr_b + step
    return WavelengthGrid.spanning(lo - margin, hi + margin, step)


@dataclass(frozen=True, eq=False)
class JointSpectralDensity:
    """Pair density on (spectrometer, bucket) wavelength bins.

    ``density[i, j]`` is per nm**2, normalized so that
    ``density.sum() * step_spect * step_bucket == 1``.
    """

    grid_spect: WavelengthGrid
    grid_bucket: WavelengthGrid
    density: np.ndarray
    _cdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        d = np.array(self.density, dtype=np.float64, copy=True)
        if d.shape != (self.grid_spect.n_bins, self.grid_bucket.n_bins):
            raise InvalidParameterError("density shape does not match the grids")
        if np.any(~np.isfinite(d)) or np.any(d < 0):
            raise InvalidParameterError("density must be finite and non-negative")
        total = d.sum() * self.cell_area
        if not abs(total - 1.0) <= 1e-6:
            raise InvalidParameterError(f"density not normalized (integral {total})")
        d.flags.writeable = False
        cdf = np.cumsum(d.ravel())
        cdf /= cdf[-1]
        cdf.flags.writeable = False
        object.__setattr__(self, "density", d)
        object.__setattr__(self, "_cdf", cdf)

    @property
    def cell_area(self) -> float:
        return self.grid_spect.step_nm * self.grid_bucket.step_nm

    @property
    def probabilities(self) -> np.ndarray:
        """Probability mass per cell (sums to 1)."""
        return self.density * self.cell_area

    def sample_bins(self, rng: RandomStream, size: int):
        """Draw ``size`` cells; returns (spect bin, bucket bin) index arrays."""
        flat = np.searchsorted(self._cdf, rng.random(size), side="right")
        np.minimum(flat, self._cdf.size - 1, out=flat)
        return np.divmod(flat, self.grid_bucket.n_bins)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lambda_spect_nm", "lambda_bucket_nm", "density"])
        ls, lb = self.grid_spect.centers, self.grid_bucket.centers
        for i in range(len(ls)):
            for j in range(len(lb)):
                w.writerow([repr(float(ls[i])), repr(float(lb[j])), repr(float(self.density[i, j]))])
        return buf.getvalue()


def _bin_masses(edges: np.ndarray, center, sigma) -> np.ndarray:
    """Gaussian probability mass in each interval of ``edges``; broadcasts over center/sigma."""
    z = (edges - np.asarray(center)[..., None]) / np.asarray(sigma)[..., None]
    return np.diff(ndtr(z), axis=-1)


def build_jsd(model: SourceModel, grid_spect: WavelengthGrid, grid_bucket: WavelengthGrid) -> JointSpectralDensity:
    """Bin-integrated joint spectral density for ``model`` on the two grids.

    The spectrometer marginal is a Gaussian of FWHM ``jsd_marginal_fwhm_nm``. Given
    a spectrometer wavelength, the bucket wavelength is Gaussian around its
    phase-matching partner, with the correlation width mapped onto the bucket arm.
    Raises ``GridCoverageError`` if more than 1% of the mass falls off the grids.
    """
    lp = model.pump.lambda_p_nm
    ls = grid_spect.centers
    if np.any(ls <= lp):
        raise GridCoverageError("spectrometer grid reaches below the pump wavelength")
    m_spect = _bin_masses(grid_spect.edges, model.center_spect_nm, model.marginal_sigma_nm)
    ridge = partner_wavelength(ls, lp)
    sigma_c = model.correlation_width_nm / FWHM_PER_SIGMA
    sigma_b = sigma_c * (ridge / ls) ** 2
    cond = _bin_masses(grid_bucket.edges, ridge, sigma_b)
    p = m_spect[:, None] * cond
    kept = p.sum()
    if kept < 0.99:
        raise GridCoverageError(f"grids capture only {kept:.4f} of the joint spectral mass")
    density = p / (kept * grid_spect.step_nm * grid_bucket.step_nm)
    return JointSpectralDensity(grid_spect, grid_bucket, density)


def sample_pair_wavelengths(jsd: JointSpectralDensity, rng: RandomStream, size=None):
    """Draw (spectrometer, bucket) wavelengths from the joint density.

    A cell is drawn by inverse CDF over the flattened bins, then each coordinate
    is jittered uniformly inside its bin.
    """
    n = 1 if size is None else int(size)
    i, j = jsd.sample_bins(rng, n)
    gs, gb = jsd.grid_spect, jsd.grid_bucket
    lam_s = gs.lo_edge + (i + rng.random(n)) * gs.step_nm
    lam_b = gb.lo_edge + (j + rng.random(n)) * gb.step_nm
    if size is None:
        return float(lam_s[0]), float(lam_b[0])
    return lam_s, lam_b


def source_marginal(jsd: JointSpectralDensity, arm: str) -> Spectrum:
    """Normalized single-arm source spectrum (``arm`` is "spect" or "bucket")."""
    if arm == "spect":
        return normalize_area(Spectrum(jsd.grid_spect, jsd.density.sum(axis=1) * jsd.grid_bucket.step_nm))
    if arm == "bucket":
        return normalize_area(Spectrum(jsd.grid_bucket, jsd.density.sum(axis=0) * jsd.grid_spect.step_nm))
    raise InvalidParameterError(f"unknown arm {arm!r}; expected 'spect' or 'bucket'")
