"""Gated Monte Carlo of the bucket and spectrometer arms.

Time is discretized into pump pulses ("gates"). In every gate each detector
clicks at most once; pair photons take precedence over afterpulses, which take
precedence over dark counts. A coincidence window is one gate: the aligned
window pairs clicks in the same gate, the shifted window pairs a spectrometer
click in gate k with a bucket click in gate k + shift_gates.

Reproducibility: gates are cut into fixed blocks of ``BLOCK_GATES``; block ``b``
draws all of its randomness from ``make_stream(seed, b)``. Workers only
generate blocks; detector state (dead time, afterpulses) and the shifted window
are chained across blocks in block order by a single reducer, so results do
not depend on the number of workers.
"""

from __future__ import annotations

import enum
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from . import _kernels as K
from .errors import GridCoverageError, InvalidParameterError, SimulationError
from .source import (
    JointSpectralDensity,
    RandomStream,
    SourceModel,
    build_jsd,
    default_bucket_grid,
    make_stream,
    mean_pairs_per_pulse,
)
from .spectral import FWHM_PER_SIGMA, WavelengthGrid

BLOCK_GATES = 1 << 20

CLASSES = ("true_pair", "multipair_accidental", "dark_involved", "afterpulse_involved")


class FilterShape(str, enum.Enum):
    GAUSSIAN = "gaussian"
    TOPHAT = "tophat"


class Cause(enum.IntEnum):
    NONE = K.NONE
    PAIR = K.PAIR
    DARK = K.DARK
    AFTERPULSE = K.AFTERPULSE


@dataclass(frozen=True)
class FilterProfile:
    """Band-pass filter in front of the bucket detector."""

    center_nm: float = 1550.0
    fwhm_nm: float = 10.0
    shape: FilterShape = FilterShape.GAUSSIAN
    peak_transmission: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "shape", FilterShape(self.shape))
        if not self.fwhm_nm > 0:
            raise InvalidParameterError("filter fwhm_nm must be > 0")
        if not 0 < self.peak_transmission <= 1:
            raise InvalidParameterError("filter peak_transmission must be in (0, 1]")


def filter_transmission(f: FilterProfile, lambda_nm):
    """Transmission of ``f`` at ``lambda_nm`` (scalar or array)."""
    lam = np.asarray(lambda_nm, dtype=np.float64)
    if np.any(lam <= 0):
        raise InvalidParameterError("wavelength must be > 0")
    if f.shape is FilterShape.GAUSSIAN:
        sigma = f.fwhm_nm / FWHM_PER_SIGMA
        out = f.peak_transmission * np.exp(-0.5 * ((lam - f.center_nm) / sigma) ** 2)
    else:
        out = np.where(np.abs(lam - f.center_nm) <= 0.5 * f.fwhm_nm, f.peak_transmission, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DetectorModel:
    efficiency: float = 0.5
    dark_prob_per_gate: float = 1e-3
    dead_time_gates: int = 0
    afterpulse_prob: float = 0.0

    def __post_init__(self):
        if not 0 < self.efficiency <= 1:
            raise InvalidParameterError("efficiency must be in (0, 1]")
        if not 0 <= self.dark_prob_per_gate < 1:
            raise InvalidParameterError("dark_prob_per_gate must be in [0, 1)")
        if not 0 <= self.afterpulse_prob < 1:
            raise InvalidParameterError("afterpulse_prob must be in [0, 1)")
        if int(self.dead_time_gates) != self.dead_time_gates or self.dead_time_gates < 0:
            raise InvalidParameterError("dead_time_gates must be a non-negative integer")
        object.__setattr__(self, "dead_time_gates", int(self.dead_time_gates))


def default_spect_grid() -> WavelengthGrid:
    return WavelengthGrid(770.0, 0.25, 321)


@dataclass(frozen=True)
class DetectionConfig:
    bucket: DetectorModel = field(default_factory=DetectorModel)
    spect: DetectorModel = field(default_factory=DetectorModel)
    filter: FilterProfile = field(default_factory=FilterProfile)
    spect_grid: WavelengthGrid = field(default_factory=default_spect_grid)
    shift_gates: int = 1

    def __post_init__(self):
        if int(self.shift_gates) != self.shift_gates or self.shift_gates < 1:
            raise InvalidParameterError("shift_gates must be a positive integer")


def check_coverage(src: SourceModel, cfg: DetectionConfig) -> None:
    """The spectrometer grid must span the source marginal +-3 sigma."""
    g = cfg.spect_grid
    half = 3.0 * src.marginal_sigma_nm
    if g.lo_edge > src.center_spect_nm - half or g.hi_edge < src.center_spect_nm + half:
        raise GridCoverageError(
            f"spectrometer grid [{g.lo_edge:.3f}, {g.hi_edge:.3f}] nm does not cover the source "
            f"marginal {src.center_spect_nm} +- {half:.3f} nm"
        )


@lru_cache(maxsize=16)
def jsd_for(src: SourceModel, spect_grid: WavelengthGrid) -> JointSpectralDensity:
    """Joint density on the detection spectrometer grid (cached)."""
    return build_jsd(src, spect_grid, default_bucket_grid(src, spect_grid))


@dataclass
class CoincidenceData:
    """Accumulated histograms of one run."""

    grid: WavelengthGrid
    aligned_hist: np.ndarray
    shifted_hist: np.ndarray
    singles_spect_hist: np.ndarray
    singles_bucket: int
    n_gates: int
    class_tally: dict
    seed: Optional[int] = None
    power_density_mw_mm2: Optional[float] = None

    @classmethod
    def empty(cls, grid: WavelengthGrid, **meta) -> "CoincidenceData":
        z = lambda: np.zeros(grid.n_bins, dtype=np.int64)  # noqa: E731
        return cls(grid, z(), z(), z(), 0, 0, {c: 0 for c in CLASSES}, **meta)

    @property
    def n_cc(self) -> int:
        return int(self.aligned_hist.sum())

    @property
    def n_acc(self) -> int:
        return int(self.shifted_hist.sum())

    def to_json_dict(self) -> dict:
        return {
            "n_gates": int(self.n_gates),
            "seed": self.seed,
            "power_density_mw_mm2": self.power_density_mw_mm2,
            "grid": self.grid.to_dict(),
            "aligned": [int(x) for x in self.aligned_hist],
            "shifted": [int(x) for x in self.shifted_hist],
            "singles_spect": [int(x) for x in self.singles_spect_hist],
            "singles_bucket": int(self.singles_bucket),
            "class_tally": {c: int(self.class_tally[c]) for c in CLASSES},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json_dict(cls, d: dict) -> "CoincidenceData":
        grid = WavelengthGrid(**d["grid"])
        arr = lambda k: np.asarray(d[k], dtype=np.int64)  # noqa: E731
        return cls(
            grid,
            arr("aligned"),
            arr("shifted"),
            arr("singles_spect"),
            int(d["singles_bucket"]),
            int(d["n_gates"]),
            {c: int(d["class_tally"].get(c, 0)) for c in CLASSES},
            d.get("seed"),
            d.get("power_density_mw_mm2"),
        )

    def same_counts(self, other: "CoincidenceData") -> bool:
        return (
            self.n_gates == other.n_gates
            and self.singles_bucket == other.singles_bucket
            and self.class_tally == other.class_tally
            and all(
                np.array_equal(getattr(self, a), getattr(other, a))
                for a in ("aligned_hist", "shifted_hist", "singles_spect_hist")
            )
        )


# ---------------------------------------------------------------------------
# single-gate reference model


@dataclass
class DetectorState:
    """Memory a detector carries from gate to gate."""

    dead_until: int = -1
    pending_gate: int = -1
    pending_pix: int = -1


@dataclass
class GateState:
    gate: int = 0
    bucket: DetectorState = field(default_factory=DetectorState)
    spect: DetectorState = field(default_factory=DetectorState)


@dataclass(frozen=True)
class GateOutcome:
    n_pairs: int
    bucket_cause: Cause
    bucket_pair: int
    spect_cause: Cause
    spect_pair: int
    spect_pixel: int

    @property
    def bucket_click(self) -> bool:
        return self.bucket_cause is not Cause.NONE

    @property
    def spect_click(self) -> bool:
        return self.spect_cause is not Cause.NONE


def _resolve(det: DetectorModel, st: DetectorState, t: int, pair, pair_pix, dark: bool, dark_pix, ap_u):
    if t <= st.dead_until:
        if st.pending_gate == t:
            st.pending_gate = -1
        return Cause.NONE, -1, -1
    if pair >= 0:
        cause, pix = Cause.PAIR, pair_pix
    elif st.pending_gate == t:
        cause, pix = Cause.AFTERPULSE, st.pending_pix
    elif dark:
        cause, pix = Cause.DARK, dark_pix
    else:
        cause, pix = Cause.NONE, -1
    if st.pending_gate == t:
        st.pending_gate = -1
    if cause is not Cause.NONE:
        st.dead_until = t + det.dead_time_gates
        if ap_u < det.afterpulse_prob:
            st.pending_gate = t + det.dead_time_gates + 1
            st.pending_pix = pix
    return cause, (pair if cause is Cause.PAIR else -1), pix


def simulate_gate(
    src: SourceModel,
    jsd: JointSpectralDensity,
    cfg: DetectionConfig,
    mu: float,
    rng: RandomStream,
    state: Optional[GateState] = None,
    n_pairs: Optional[int] = None,
) -> GateOutcome:
    """Simulate one pump pulse, one event at a time.

    This is the slow, readable model; ``run_experiment`` implements the same
    rules in vectorized form. ``state`` carries dead time and afterpulses
    between consecutive calls; ``n_pairs`` forces the number of emitted pairs.
    The pixel grid is ``jsd.grid_spect``.
    """
    if state is None:
        state = GateState()
    k = int(rng.poisson(mu)) if n_pairs is None else int(n_pairs)
    b_pair = s_pair = -1
    s_pix = -1
    gs = jsd.grid_spect
    for pair in range(k):
        i, j = jsd.sample_bins(rng, 1)
        lam_s = gs.lo_edge + (i[0] + rng.random()) * gs.step_nm
        lam_b = jsd.grid_bucket.lo_edge + (j[0] + rng.random()) * jsd.grid_bucket.step_nm
        if rng.random() < cfg.bucket.efficiency * filter_transmission(cfg.filter, lam_b) and b_pair < 0:
            b_pair = pair
        if rng.random() < cfg.spect.efficiency and s_pair < 0:
            s_pair = pair
            s_pix = int(gs.index_of(lam_s))
    b_dark = rng.random() < cfg.bucket.dark_prob_per_gate
    s_dark = rng.random() < cfg.spect.dark_prob_per_gate
    s_dark_pix = int(rng.integers(gs.n_bins))
    b_ap, s_ap = rng.random(), rng.random()

    t = state.gate
    bc, bp, _ = _resolve(cfg.bucket, state.bucket, t, b_pair, 0, b_dark, 0, b_ap)
    sc, sp, spix = _resolve(cfg.spect, state.spect, t, s_pair, s_pix, s_dark, s_dark_pix, s_ap)
    state.gate += 1
    return GateOutcome(k, bc, bp, sc, sp, spix)


def classify(b_cause, b_pair, s_cause, s_pair):
    """Class label of an aligned coincidence."""
    if b_cause == Cause.PAIR and s_cause == Cause.PAIR:
        return "true_pair" if b_pair == s_pair else "multipair_accidental"
    if b_cause == Cause.DARK or s_cause == Cause.DARK:
        return "dark_involved"
    return "afterpulse_involved"


def run_reference(src, cfg, power_density, n_gates, seed) -> CoincidenceData:
    """``run_experiment`` built from repeated ``simulate_gate`` calls (slow; for cross-checks)."""
    check_coverage(src, cfg)
    jsd = jsd_for(src, cfg.spect_grid)
    mu = mean_pairs_per_pulse(power_density, src)
    rng = make_stream(seed, 0)
    data = CoincidenceData.empty(cfg.spect_grid, seed=seed, power_density_mw_mm2=power_density)
    state = GateState()
    spect_hist = []
    for _ in range(n_gates):
        o = simulate_gate(src, jsd, cfg, mu, rng, state)
        spect_hist.append(o.spect_pixel if o.spect_click else -1)
        if o.bucket_click:
            data.singles_bucket += 1
        if o.spect_click:
            data.singles_spect_hist[o.spect_pixel] += 1
        if o.bucket_click and o.spect_click:
            data.aligned_hist[o.spect_pixel] += 1
            data.class_tally[classify(o.bucket_cause, o.bucket_pair, o.spect_cause, o.spect_pair)] += 1
        back = len(spect_hist) - 1 - cfg.shift_gates
        if o.bucket_click and back >= 0 and spect_hist[back] >= 0:
            data.shifted_hist[spect_hist[back]] += 1
    data.n_gates = n_gates
    return data


# ---------------------------------------------------------------------------
# vectorized engine


@dataclass(frozen=True)
class _RunContext:
    jsd: JointSpectralDensity
    cfg: DetectionConfig
    mu: float
    seed: int


@dataclass
class _Block:
    """Per-gate candidate events of one block, before detector state is applied."""

    b_pair: np.ndarray
    s_pair: np.ndarray
    s_pix: np.ndarray
    b_dark: np.ndarray
    s_dark: np.ndarray
    b_ap: np.ndarray
    s_ap: np.ndarray


_NO_AP = np.zeros(1)


def _first_per_gate(gate, accepted, n):
    """Index of the first accepted pair in each gate, -1 where none."""
    out = np.full(n, -1, dtype=np.int64)
    idx = np.flatnonzero(accepted)
    if idx.size:
        g = gate[idx]
        first = np.ones(idx.size, dtype=bool)
        first[1:] = g[1:] != g[:-1]
        out[g[first]] = idx[first]
    return out


def _dark_events(rng, p, n, n_pix):
    """Per-gate dark pixel (-1 where no dark count)."""
    out = np.full(n, -1, dtype=np.int32)
    if p > 0:
        hit = np.flatnonzero(rng.random(n) < p)
        out[hit] = 0 if n_pix == 1 else rng.integers(0, n_pix, hit.size)
    return out


def _generate_block(ctx: _RunContext, b: int, n: int) -> _Block:
    rng = make_stream(ctx.seed, b)
    cfg, jsd = ctx.cfg, ctx.jsd
    k = rng.poisson(ctx.mu, n) if ctx.mu > 0 else np.zeros(n, dtype=np.int64)
    n_pairs = int(k.sum())
    gate = np.repeat(np.arange(n), k)
    i_s, j_b = jsd.sample_bins(rng, n_pairs)
    gb = jsd.grid_bucket
    lam_b = gb.lo_edge + (j_b + rng.random(n_pairs)) * gb.step_nm
    pass_b = rng.random(n_pairs) < cfg.bucket.efficiency * filter_transmission(cfg.filter, lam_b)
    pass_s = rng.random(n_pairs) < cfg.spect.efficiency
    b_first = _first_per_gate(gate, pass_b, n)
    s_first = _first_per_gate(gate, pass_s, n)
    s_pix = np.where(s_first >= 0, i_s[np.maximum(s_first, 0)] if n_pairs else 0, -1).astype(np.int32)
    # pair ids are local to the block; only same-gate comparisons use them
    b_dark = _dark_events(rng, cfg.bucket.dark_prob_per_gate, n, 1)
    s_dark = _dark_events(rng, cfg.spect.dark_prob_per_gate, n, cfg.spect_grid.n_bins)
    b_ap = rng.random(n) if cfg.bucket.afterpulse_prob > 0 else _NO_AP
    s_ap = rng.random(n) if cfg.spect.afterpulse_prob > 0 else _NO_AP
    return _Block(b_first, s_first, s_pix, b_dark, s_dark, b_ap, s_ap)


class _Reducer:
    """Applies detector state and accumulates histograms, block by block in order."""

    def __init__(self, cfg: DetectionConfig, data: CoincidenceData):
        self.cfg = cfg
        self.data = data
        self.b_state = np.array([-1, -1, -1], dtype=np.int64)
        self.s_state = np.array([-1, -1, -1], dtype=np.int64)
        self.tail = np.full(cfg.shift_gates, -1, dtype=np.int32)
        self.offset = 0

    def add(self, blk: _Block):
        cfg, data = self.cfg, self.data
        n = blk.b_pair.size
        zeros = np.zeros(n, dtype=np.int32)
        bc, _ = K.scan_detector(
            blk.b_pair, zeros, blk.b_dark, blk.b_ap, cfg.bucket.afterpulse_prob,
            cfg.bucket.dead_time_gates, self.b_state, self.offset,
        )
        sc, spix = K.scan_detector(
            blk.s_pair, blk.s_pix, blk.s_dark, blk.s_ap, cfg.spect.afterpulse_prob,
            cfg.spect.dead_time_gates, self.s_state, self.offset,
        )
        nb = data.grid.n_bins
        b_click = bc != K.NONE
        s_click = sc != K.NONE
        data.singles_bucket += int(np.count_nonzero(b_click))
        data.singles_spect_hist += np.bincount(spix[s_click], minlength=nb)

        both = b_click & s_click
        data.aligned_hist += np.bincount(spix[both], minlength=nb)
        bcb, scb = bc[both], sc[both]
        pair_pair = (bcb == K.PAIR) & (scb == K.PAIR)
        same = blk.b_pair[both] == blk.s_pair[both]
        dark = ~pair_pair & ((bcb == K.DARK) | (scb == K.DARK))
        tally = data.class_tally
        tally["true_pair"] += int(np.count_nonzero(pair_pair & same))
        tally["multipair_accidental"] += int(np.count_nonzero(pair_pair & ~same))
        tally["dark_involved"] += int(np.count_nonzero(dark))
        tally["afterpulse_involved"] += int(np.count_nonzero(~pair_pair & ~dark))

        # shifted window: spect click at gate t - shift against bucket click at t
        s_ext = np.concatenate([self.tail, np.where(s_click, spix, -1).astype(np.int32)])
        s_back = s_ext[:n]
        hit = b_click & (s_back >= 0)
        data.shifted_hist += np.bincount(s_back[hit], minlength=nb)
        self.tail = s_ext[-cfg.shift_gates:].copy()
        self.offset += n
        data.n_gates += n


def run_experiment(
    src: SourceModel,
    cfg: DetectionConfig,
    power_density: float,
    n_gates: int,
    seed: int,
    workers: int = 1,
) -> CoincidenceData:
    """Simulate ``n_gates`` pump pulses and accumulate coincidence histograms.

    Output is identical for any ``workers`` value.
    """
    if int(n_gates) != n_gates or n_gates < 1:
        raise InvalidParameterError("n_gates must be a positive integer")
    if workers < 1:
        raise InvalidParameterError("workers must be >= 1")
    check_coverage(src, cfg)
    n_gates = int(n_gates)
    mu = mean_pairs_per_pulse(power_density, src)
    if not math.isfinite(mu):
        raise SimulationError("non-finite mean pair number")
    ctx = _RunContext(jsd_for(src, cfg.spect_grid), cfg, mu, int(seed))
    data = CoincidenceData.empty(cfg.spect_grid, seed=int(seed), power_density_mw_mm2=float(power_density))
    reducer = _Reducer(cfg, data)
    n_blocks = -(-n_gates // BLOCK_GATES)
    sizes = [min(BLOCK_GATES, n_gates - b * BLOCK_GATES) for b in range(n_blocks)]
    if workers == 1:
        for b in range(n_blocks):
            reducer.add(_generate_block(ctx, b, sizes[b]))
        return data
    wave = 2 * workers
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for w0 in range(0, n_blocks, wave):
            idx = range(w0, min(n_blocks, w0 + wave))
            for blk in pool.map(lambda b: _generate_block(ctx, b, sizes[b]), idx):
                reducer.add(blk)
    return data
