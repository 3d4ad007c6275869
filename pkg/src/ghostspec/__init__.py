"""Simulation and analysis toolkit for quantum ghost spectroscopy under white and colored noise."""

from .analysis import (
    RPMap,
    fitted_fwhm,
    map_to_bucket_axis,
    reconstruct_ghost,
    sweep_resolving_power,
    two_peak_ghost,
)
from .car import CarPoint, ExpDecayFit, compute_car, fit_exp_decay
from .config import RunConfig, parse_config
from .detection import (
    CoincidenceData,
    DetectionConfig,
    DetectorModel,
    FilterProfile,
    filter_transmission,
    run_experiment,
    simulate_gate,
)
from .fitting import GaussianFitResult, fit_gaussians, resolving_power
from .noise import NoiseMix, classify_noise, mix_colored, mix_white, noise_spectrum
from .source import (
    JointSpectralDensity,
    SourceModel,
    build_jsd,
    make_stream,
    mean_pairs_per_pulse,
    sample_pair_count,
    sample_pair_wavelengths,
    source_marginal,
)
from .spectral import (
    PumpSpec,
    Spectrum,
    WavelengthGrid,
    convert_bandwidth,
    empirical_fwhm,
    normalize_area,
    partner_wavelength,
    savgol_smooth,
)

__version__ = "0.1.0"

__all__ = [
    "CarPoint",
    "CoincidenceData",
    "DetectionConfig",
    "DetectorModel",
    "ExpDecayFit",
    "FilterProfile",
    "GaussianFitResult",
    "JointSpectralDensity",
    "NoiseMix",
    "PumpSpec",
    "RPMap",
    "RunConfig",
    "SourceModel",
    "Spectrum",
    "WavelengthGrid",
    "build_jsd",
    "classify_noise",
    "compute_car",
    "convert_bandwidth",
    "empirical_fwhm",
    "filter_transmission",
    "fit_exp_decay",
    "fit_gaussians",
    "fitted_fwhm",
    "make_stream",
    "map_to_bucket_axis",
    "mean_pairs_per_pulse",
    "mix_colored",
    "mix_white",
    "noise_spectrum",
    "normalize_area",
    "parse_config",
    "partner_wavelength",
    "reconstruct_ghost",
    "resolving_power",
    "run_experiment",
    "sample_pair_count",
    "sample_pair_wavelengths",
    "savgol_smooth",
    "simulate_gate",
    "source_marginal",
    "sweep_resolving_power",
    "two_peak_ghost",
]
