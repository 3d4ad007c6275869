"""Gaussian peak fitting with a damped Gauss-Newton (Levenberg-Marquardt) solver.

Model: ``d + sum_k a_k * exp(-(x - x0_k)**2 / (2 * sigma_k**2))`` with one
shared offset ``d``. Parameter vector layout: ``[d, a_1, x0_1, sigma_1, a_2, ...]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import EmptySpectrumError, InvalidParameterError, ShapeError
from .spectral import FWHM_PER_SIGMA, Spectrum, empirical_fwhm, savgol_smooth

MAX_ITER = 500
RTOL_COST = 1e-10
STEP_TOL = 1e-12


@dataclass(frozen=True)
class Peak:
    amplitude: float
    center: float
    sigma: float

    @property
    def fwhm(self) -> float:
        return FWHM_PER_SIGMA * self.sigma


@dataclass(frozen=True)
class GaussianFitResult:
    offset_d: float
    peaks: Tuple[Peak, ...]
    residual_norm: float
    converged: bool
    iterations: int
    cost_history: Tuple[float, ...] = field(default=(), repr=False)

    @property
    def params(self) -> np.ndarray:
        return pack(self.offset_d, self.peaks)


def pack(offset: float, peaks: Sequence) -> np.ndarray:
    out = [float(offset)]
    for p in peaks:
        a, x0, s = (p.amplitude, p.center, p.sigma) if isinstance(p, Peak) else p
        out += [float(a), float(x0), float(s)]
    return np.array(out)


def model(x: np.ndarray, params: np.ndarray) -> np.ndarray:
    y = np.full(x.shape, params[0], dtype=np.float64)
    for a, x0, s in params[1:].reshape(-1, 3):
        y += a * np.exp(-0.5 * ((x - x0) / s) ** 2)
    return y


def jacobian(x: np.ndarray, params: np.ndarray) -> np.ndarray:
    """Analytic partial derivatives of ``model``, shape (len(x), len(params))."""
    J = np.empty((x.size, params.size))
    J[:, 0] = 1.0
    for k, (a, x0, s) in enumerate(params[1:].reshape(-1, 3)):
        u = x - x0
        e = np.exp(-0.5 * (u / s) ** 2)
        c = 1 + 3 * k
        J[:, c] = e
        J[:, c + 1] = a * e * u / s**2
        J[:, c + 2] = a * e * u**2 / s**3
    return J


def _local_maxima(v: np.ndarray) -> np.ndarray:
    i = np.arange(1, v.size - 1)
    m = (v[i] > v[i - 1]) & (v[i] >= v[i + 1])
    return i[m]


def initial_guess(s: Spectrum, n_peaks: int) -> np.ndarray:
    """Deterministic start point from peak picking on the smoothed spectrum.

    With two requested peaks but a single local maximum, the centers start at
    the maximum +- half its FWHM.
    """
    x = s.grid.centers
    step = s.grid.step_nm
    window = min(11, s.grid.n_bins if s.grid.n_bins % 2 else s.grid.n_bins - 1)
    sm = savgol_smooth(s, window, 3).values if window >= 5 else s.values
    if not np.any(sm > 0):
        sm = s.values
    base = float(np.min(sm))
    try:
        width = empirical_fwhm(Spectrum(s.grid, sm))
    except ShapeError:
        width = 4 * step
    width = max(width, 2 * step)

    peaks_idx = _local_maxima(sm)
    # ignore ripples in the tails
    top = float(np.max(sm))
    peaks_idx = peaks_idx[sm[peaks_idx] - base > 0.1 * (top - base)]
    peaks_idx = peaks_idx[np.argsort(-sm[peaks_idx], kind="stable")][:n_peaks]
    if peaks_idx.size == 0:
        peaks_idx = np.array([int(np.argmax(sm))])
    if n_peaks == 1:
        i = int(peaks_idx[0])
        return pack(base, [(sm[i] - base, x[i], width / FWHM_PER_SIGMA)])
    if peaks_idx.size == 2:
        i, j = sorted(int(t) for t in peaks_idx)
        # the half-max width spans both peaks when they overlap
        sep = abs(x[j] - x[i])
        sig = max((width - sep if width > 2 * sep else min(width, sep)) / FWHM_PER_SIGMA, step)
        return pack(base, [(sm[i] - base, x[i], sig), (sm[j] - base, x[j], sig)])
    i = int(peaks_idx[0])
    amp = sm[i] - base
    sig = max(0.5 * width / FWHM_PER_SIGMA, step)
    amp *= 0.5
    return pack(base, [(amp, x[i] - width / 2, sig), (amp, x[i] + width / 2, sig)])


def _split_coincident(p: np.ndarray, step: float) -> np.ndarray:
    p = p.copy()
    if p.size == 7 and abs(p[2] - p[5]) < 1e-12 * max(1.0, abs(p[2])):
        p[2] -= step
        p[5] += step
    return p


def levenberg_marquardt(x, y, p0, max_iter=MAX_ITER):
    """Minimize ``sum((model(x, p) - y)**2)``.

    Damping grows tenfold after a rejected step and shrinks tenfold after an
    accepted one; steps that make any sigma non-positive are rejected. Returns
    ``(params, converged, iterations, cost_history)`` where the history holds
    the cost after every accepted step (non-increasing by construction).
    """
    p = np.asarray(p0, dtype=np.float64).copy()
    r = model(x, p) - y
    cost = float(r @ r)
    history = [cost]
    lam = 1e-3
    scale = np.zeros_like(p)
    for it in range(1, max_iter + 1):
        if cost == 0.0:
            return p, True, it - 1, history
        J = jacobian(x, p)
        g = J.T @ r
        A = J.T @ J
        # MINPACK-style scaling: never shrink, so vanishing partials cannot invite huge steps
        scale = np.maximum(scale, np.diag(A))
        diag = np.where(scale > 0, scale, 1.0)
        while True:
            try:
                delta = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                delta = np.linalg.lstsq(A + lam * np.diag(diag), -g, rcond=None)[0]
            if np.linalg.norm(delta) < STEP_TOL * (np.linalg.norm(p) + STEP_TOL):
                return p, True, it, history
            trial = p + delta
            if np.all(trial[3::3] > 0) and np.all(np.isfinite(trial)):
                r_new = model(x, trial) - y
                c_new = float(r_new @ r_new)
                if c_new < cost:
                    break
            lam *= 10.0
            if lam > 1e16:
                return p, False, it, history
        rel = (cost - c_new) / cost
        p, r, cost = trial, r_new, c_new
        history.append(cost)
        lam = max(lam / 10.0, 1e-12)
        if rel < RTOL_COST:
            return p, True, it, history
    return p, False, max_iter, history


def fit_gaussians(s: Spectrum, n_peaks: int = 1, init: Optional[np.ndarray] = None) -> GaussianFitResult:
    """Least-squares fit of 1 or 2 Gaussians plus a shared constant offset.

    Non-convergence is reported through ``converged=False`` with the best
    parameters found.
    """
    if n_peaks not in (1, 2):
        raise InvalidParameterError("n_peaks must be 1 or 2")
    if s.grid.n_bins < 4 * n_peaks + 1:
        raise ShapeError(f"need at least {4 * n_peaks + 1} bins for {n_peaks} peak(s)")
    if not np.any(s.values > 0):
        raise EmptySpectrumError("cannot fit an all-zero spectrum")
    x = s.grid.centers
    if init is None:
        p0 = initial_guess(s, n_peaks)
    else:
        p0 = np.asarray(init, dtype=np.float64)
        if p0.size != 1 + 3 * n_peaks:
            raise InvalidParameterError("init has the wrong number of parameters")
        centers = p0[2::3]
        if np.any(centers < s.grid.lo_edge) or np.any(centers > s.grid.hi_edge):
            raise InvalidParameterError("initial centers must lie inside the grid")
    p0 = _split_coincident(p0, s.grid.step_nm)
    p, converged, iters, hist = levenberg_marquardt(x, s.values, p0)
    peaks = sorted((Peak(a, x0, sg) for a, x0, sg in p[1:].reshape(-1, 3)), key=lambda q: q.center)
    r = model(x, p) - s.values
    return GaussianFitResult(float(p[0]), tuple(peaks), float(np.linalg.norm(r)), converged, iters, tuple(hist))


def resolving_power(fit: GaussianFitResult) -> float:
    """Center separation over the sum of the two sigmas; > 1 means resolved."""
    if len(fit.peaks) != 2:
        raise InvalidParameterError("resolving power needs exactly two peaks")
    p1, p2 = fit.peaks
    if p1.sigma <= 0 or p2.sigma <= 0:
        raise InvalidParameterError("peak sigmas must be positive")
    return abs(p2.center - p1.center) / (p1.sigma + p2.sigma)


def peaks_from(fit: GaussianFitResult) -> List[dict]:
    return [{"amplitude": p.amplitude, "center_nm": p.center, "sigma_nm": p.sigma} for p in fit.peaks]
