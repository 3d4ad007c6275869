"""Ghost-spectrum reconstruction and the two-peak resolving-power sweep."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .detection import CoincidenceData
from .errors import EmptySpectrumError, InvalidParameterError
from .fitting import fit_gaussians, resolving_power
from .noise import mix_colored
from .spectral import (
    DEFAULT_SG_ORDER,
    DEFAULT_SG_WINDOW,
    FWHM_PER_SIGMA,
    Spectrum,
    WavelengthGrid,
    gaussian,
    normalize_area,
    partner_wavelength,
    savgol_smooth,
)


def map_to_bucket_axis(s: Spectrum, lambda_p_nm: float) -> Spectrum:
    """Re-express a spectrometer-arm spectrum on the partner (bucket-arm) axis.

    Bin contents are redistributed conservatively: the cumulative distribution
    is carried through the phase-matching map and re-binned on a uniform
    partner grid that covers the whole image, so total area is preserved.
    """
    lo_b = partner_wavelength(s.grid.hi_edge, lambda_p_nm)
    hi_b = partner_wavelength(s.grid.lo_edge, lambda_p_nm)
    c_s = 0.5 * (s.grid.lo_edge + s.grid.hi_edge)
    c_b = partner_wavelength(c_s, lambda_p_nm)
    step_b = s.grid.step_nm * (c_b / c_s) ** 2
    n_b = int(math.ceil((hi_b - lo_b) / step_b))
    grid_b = WavelengthGrid(lo_b + 0.5 * step_b, step_b, max(n_b, 2))

    mass = s.values * s.grid.step_nm
    # partner edges run backwards: cumulative mass from the long-wavelength side
    edges_b = partner_wavelength(s.grid.edges[::-1], lambda_p_nm)
    cum = np.concatenate([[0.0], np.cumsum(mass[::-1])])
    new_cum = np.interp(grid_b.edges, edges_b, cum, left=0.0, right=cum[-1])
    values = np.diff(new_cum) / step_b
    return Spectrum(grid_b, np.clip(values, 0.0, None), s.kind)


def reconstruct_ghost(
    data: CoincidenceData,
    subtract_accidentals: bool = True,
    smooth: Optional[Tuple[int, int]] = (DEFAULT_SG_WINDOW, DEFAULT_SG_ORDER),
    map_to_bucket_arm: bool = False,
    lambda_p_nm: float = 532.0,
) -> Spectrum:
    """Ghost spectrum from the per-pixel coincidence histograms.

    Aligned counts, optionally minus shifted counts (clamped at zero), then
    Savitzky-Golay smoothed and area-normalized. ``smooth=None`` skips smoothing.
    """
    if data.n_cc <= 0:
        raise EmptySpectrumError("no aligned coincidences recorded")
    counts = data.aligned_hist.astype(np.float64)
    if subtract_accidentals:
        counts = np.clip(counts - data.shifted_hist, 0.0, None)
    s = Spectrum(data.grid, counts)
    if smooth is not None:
        s = savgol_smooth(s, *smooth)
    s = normalize_area(s)
    if map_to_bucket_arm:
        s = normalize_area(map_to_bucket_axis(s, lambda_p_nm))
    return s


def fitted_fwhm(s: Spectrum) -> Tuple[float, float]:
    """(FWHM, center) of a single-Gaussian-plus-offset fit."""
    fit = fit_gaussians(s, 1)
    pk = fit.peaks[0]
    return float(FWHM_PER_SIGMA * pk.sigma), float(pk.center)


# ---------------------------------------------------------------------------
# resolving power sweep


def two_peak_ghost(grid: WavelengthGrid, separation_nm: float, peak_fwhm_nm: float, center_nm: float = 810.0) -> Spectrum:
    """Normalized sum of two equal Gaussians at ``center +- separation / 2``."""
    x = grid.centers
    v = gaussian(x, center_nm - separation_nm / 2, peak_fwhm_nm) + gaussian(x, center_nm + separation_nm / 2, peak_fwhm_nm)
    return normalize_area(Spectrum(grid, v))


@dataclass(frozen=True, eq=False)
class RPMap:
    separations_nm: np.ndarray
    noise_fractions: np.ndarray
    rp: np.ndarray
    converged: np.ndarray = field(repr=False, default=None)
    peak_fwhm_nm: float = 2.8
    noise_scale: str = "peak"

    @property
    def resolvable(self) -> np.ndarray:
        return self.rp > 1.0

    @property
    def n_failed(self) -> int:
        return int(np.count_nonzero(np.isnan(self.rp)))

    def crossing(self, i: int) -> Optional[float]:
        """Noise fraction where rp of separation row ``i`` first drops below 1.

        Linear interpolation between the bracketing grid points; 0.0 when the
        row starts unresolved, None when it never drops below 1.
        """
        n, r = self.noise_fractions, self.rp[i]
        if r[0] <= 1.0:
            return 0.0
        for k in range(1, len(n)):
            if np.isnan(r[k]) or np.isnan(r[k - 1]):
                continue
            if r[k] <= 1.0 < r[k - 1]:
                return float(n[k - 1] + (r[k - 1] - 1.0) / (r[k - 1] - r[k]) * (n[k] - n[k - 1]))
        return None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["separation_nm", "noise_fraction", "rp", "resolvable"])
        for i, d in enumerate(self.separations_nm):
            for j, n in enumerate(self.noise_fractions):
                r = self.rp[i, j]
                w.writerow([repr(float(d)), repr(float(n)), "nan" if np.isnan(r) else repr(float(r)), str(bool(r > 1.0)).lower()])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "separations_nm": [float(d) for d in self.separations_nm],
            "noise_fractions": [float(n) for n in self.noise_fractions],
            "peak_fwhm_nm": self.peak_fwhm_nm,
            "noise_scale": self.noise_scale,
            "crossing_noise_fraction": {repr(float(d)): self.crossing(i) for i, d in enumerate(self.separations_nm)},
            "non_converged": int(np.count_nonzero(~self.converged)) if self.converged is not None else 0,
            "failed_cells": self.n_failed,
        }


def area_fraction(n: float, ghost: Spectrum, source: Spectrum) -> float:
    """Area share of the source in a mixture whose noise share of peak height is ``n``.

    The mixture ``(1 - n) * ghost / max(ghost) + n * source / max(source)``
    equals ``mix_colored(ghost, source, area_fraction(n, ghost, source))``.
    """
    a_g = 1.0 / float(np.max(normalize_area(ghost).values))
    a_s = 1.0 / float(np.max(normalize_area(source).values))
    den = n * a_s + (1.0 - n) * a_g
    return 0.0 if den == 0 else n * a_s / den


def _sweep_row(grid, source, d, fracs, peak_fwhm_nm, center_nm, noise_scale):
    """R_P along one separation row, fitted in order of increasing noise.

    Each cell is fitted from the peak-picked start and, when available, from the
    previous cell's solution; the lower-cost converged fit wins.
    """
    ghost = two_peak_ghost(grid, d, peak_fwhm_nm, center_nm)
    rp = np.full(len(fracs), np.nan)
    ok = np.zeros(len(fracs), dtype=bool)
    prev = None
    for j, n in enumerate(fracs):
        na = area_fraction(n, ghost, source) if noise_scale == "peak" else n
        noisy = mix_colored(ghost, source, na)
        fits = [fit_gaussians(noisy, 2)]
        if prev is not None:
            fits.append(fit_gaussians(noisy, 2, init=prev))
        good = [f for f in fits if f.converged]
        if not good:
            continue
        best = min(good, key=lambda f: f.residual_norm)
        rp[j], ok[j] = resolving_power(best), True
        prev = best.params
    return rp, ok


def sweep_resolving_power(
    separations: Sequence[float],
    noise_fracs: Sequence[float],
    peak_fwhm_nm: float,
    source: Spectrum,
    grid: Optional[WavelengthGrid] = None,
    center_nm: float = 810.0,
    noise_scale: str = "peak",
    workers: int = 1,
) -> RPMap:
    """Resolving power of a two-peak ghost under increasing colored noise.

    For every (separation, noise) cell the analytic two-peak ghost is mixed with
    ``source`` through ``mix_colored``, fitted with two Gaussians and scored by
    R_P. ``noise_scale="peak"`` reads each noise fraction as the source's share
    of the combined peak heights; ``"area"`` passes it to ``mix_colored`` as the
    area share. Non-converged cells are NaN.
    """
    grid = source.grid if grid is None else grid
    seps = np.asarray(separations, dtype=np.float64)
    fracs = np.asarray(noise_fracs, dtype=np.float64)
    span = grid.stop_nm - grid.start_nm
    if np.any(seps <= 0) or np.any(seps >= span):
        raise InvalidParameterError("separations must lie in (0, grid span)")
    if np.any(fracs < 0) or np.any(fracs > 1):
        raise InvalidParameterError("noise fractions must be in [0, 1]")
    if not peak_fwhm_nm > 0:
        raise InvalidParameterError("peak_fwhm_nm must be > 0")
    if noise_scale not in ("peak", "area"):
        raise InvalidParameterError("noise_scale must be 'peak' or 'area'")
    source = normalize_area(source)
    order = np.argsort(fracs, kind="stable")

    def run(d):
        rp, ok = _sweep_row(grid, source, d, fracs[order], peak_fwhm_nm, center_nm, noise_scale)
        out_rp, out_ok = np.empty_like(rp), np.empty_like(ok)
        out_rp[order], out_ok[order] = rp, ok
        return out_rp, out_ok

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, seps))
    else:
        rows = [run(d) for d in seps]
    rp = np.array([r for r, _ in rows]).reshape(seps.size, fracs.size)
    ok = np.array([c for _, c in rows]).reshape(seps.size, fracs.size)
    return RPMap(seps, fracs, rp, ok, float(peak_fwhm_nm), noise_scale)
