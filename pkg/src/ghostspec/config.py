"""Run configuration: YAML parsing, validation and defaults.

Every section is optional; an empty document yields the default setup
(532 nm pump at 40 MHz, 1550 nm / 10 nm filter on the bucket arm,
spectrometer centered at 810 nm). Unknown keys are rejected.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Tuple

import yaml

from .detection import DetectionConfig, DetectorModel, FilterProfile
from .errors import ConfigError, GhostSpecError
from .source import SourceModel
from .spectral import PumpSpec, WavelengthGrid


def _default_powers() -> List[float]:
    return [0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 31.58, 50.0, 100.0]


def _default_separations() -> List[float]:
    return [0.5, 1.0, 1.5, 2.0, 2.5, 3.0]


def _default_fractions() -> List[float]:
    return [round(0.05 * i, 2) for i in range(11)]


@dataclass(frozen=True)
class AnalysisSettings:
    sg_window: int = 11
    sg_order: int = 3
    tail_start: float = 10.0
    car_min_threshold: float = 6.5
    separations_nm: Tuple[float, ...] = field(default_factory=lambda: tuple(_default_separations()))
    noise_fractions: Tuple[float, ...] = field(default_factory=lambda: tuple(_default_fractions()))
    peak_fwhm_nm: float = 2.8
    noise_scale: str = "peak"


@dataclass(frozen=True)
class RunConfig:
    source: SourceModel = field(default_factory=SourceModel)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    power_densities: Tuple[float, ...] = field(default_factory=lambda: tuple(_default_powers()))
    n_gates: int = 1_000_000
    seed: int = 0
    analysis: AnalysisSettings = field(default_factory=AnalysisSettings)

    def with_overrides(self, **kw) -> "RunConfig":
        d = self.to_dict()
        d.update({k: v for k, v in kw.items() if v is not None})
        return config_from_dict(d)

    def to_dict(self) -> dict:
        """Fully resolved configuration, suitable for ``config_from_dict``."""
        d = {
            "source": {
                "pump": asdict(self.source.pump),
                "center_spect_nm": self.source.center_spect_nm,
                "jsd_marginal_fwhm_nm": self.source.jsd_marginal_fwhm_nm,
                "correlation_width_nm": self.source.correlation_width_nm,
                "brightness_coeff": self.source.brightness_coeff,
            },
            "detection": {
                "bucket": asdict(self.detection.bucket),
                "spect": asdict(self.detection.spect),
                "filter": {**asdict(self.detection.filter), "shape": self.detection.filter.shape.value},
                "spect_grid": self.detection.spect_grid.to_dict(),
                "shift_gates": self.detection.shift_gates,
            },
            "power_densities": list(self.power_densities),
            "n_gates": self.n_gates,
            "seed": self.seed,
            "analysis": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self.analysis).items()},
        }
        return d


def _section(data: Any, path: str, allowed) -> Dict[str, Any]:
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'document'}: expected a mapping")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"{path + '.' if path else ''}{unknown[0]}: unknown key")
    return dict(data)


def _number(v, key, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key}: expected a number")
    if integer:
        if int(v) != v:
            raise ConfigError(f"{key}: expected an integer")
        return int(v)
    return float(v)


def _build(cls, data, path, integer_keys=(), nested=None, string_keys=()):
    nested = nested or {}
    names = [f.name for f in fields(cls) if f.init]
    raw = _section(data, path, names)
    kw = {}
    for k, v in raw.items():
        key = f"{path}.{k}" if path else k
        if k in nested:
            kw[k] = nested[k](v, key)
        elif k in string_keys:
            if not isinstance(v, str):
                raise ConfigError(f"{key}: expected a string")
            kw[k] = v
        elif v is None and k == "correlation_width_nm":
            kw[k] = None
        else:
            kw[k] = _number(v, key, k in integer_keys)
    try:
        return cls(**kw)
    except GhostSpecError as exc:
        raise ConfigError(f"{path or 'document'}: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or 'document'}: {exc}") from exc


def _pump(v, path):
    return _build(PumpSpec, v, path)


def _source(v, path):
    return _build(SourceModel, v, path, nested={"pump": _pump})


def _detector(v, path):
    return _build(DetectorModel, v, path, integer_keys=("dead_time_gates",))


def _grid(v, path):
    return _build(WavelengthGrid, v, path, integer_keys=("n_bins",))


def _detection(v, path):
    return _build(
        DetectionConfig,
        v,
        path,
        integer_keys=("shift_gates",),
        nested={
            "bucket": _detector,
            "spect": _detector,
            "filter": lambda x, p: _build(FilterProfile, x, p, string_keys=("shape",)),
            "spect_grid": _grid,
        },
    )


def _float_list(v, key, lo=None, hi=None, what="value"):
    if not isinstance(v, (list, tuple)) or not v:
        raise ConfigError(f"{key}: expected a non-empty list")
    out = tuple(_number(x, key) for x in v)
    for x in out:
        if (lo is not None and x < lo) or (hi is not None and x > hi):
            raise ConfigError(f"{key}: {what} in [{lo},{hi}]" if hi is not None else f"{key}: {what} >= {lo}")
    return out


def _analysis(v, path):
    raw = _section(v, path, [f.name for f in fields(AnalysisSettings)])
    kw = {}
    for k, val in raw.items():
        key = f"{path}.{k}"
        if k in ("sg_window", "sg_order"):
            kw[k] = _number(val, key, integer=True)
        elif k == "separations_nm":
            kw[k] = _float_list(val, key, lo=0.0, what="separation")
        elif k == "noise_fractions":
            kw[k] = _float_list(val, key, lo=0.0, hi=1.0, what="fraction")
        elif k == "noise_scale":
            if val not in ("peak", "area"):
                raise ConfigError(f"{key}: must be 'peak' or 'area'")
            kw[k] = val
        else:
            kw[k] = _number(val, key)
    a = AnalysisSettings(**kw)
    if a.sg_order < 0:
        raise ConfigError(f"{path}.sg_order: order must be >= 0")
    if a.sg_window % 2 == 0:
        raise ConfigError(f"{path}.sg_window: window must be odd")
    if a.sg_window < a.sg_order + 2:
        raise ConfigError(f"{path}.sg_window: window must be >= sg_order + 2")
    if any(s <= 0 for s in a.separations_nm):
        raise ConfigError(f"{path}.separations_nm: separation must be > 0")
    if not a.peak_fwhm_nm > 0:
        raise ConfigError(f"{path}.peak_fwhm_nm: must be > 0")
    if not a.car_min_threshold > 0:
        raise ConfigError(f"{path}.car_min_threshold: must be > 0")
    return a


def config_from_dict(data) -> RunConfig:
    raw = _section(data, "", [f.name for f in fields(RunConfig)])
    kw = {}
    if "source" in raw:
        kw["source"] = _source(raw["source"], "source")
    if "detection" in raw:
        kw["detection"] = _detection(raw["detection"], "detection")
    if "analysis" in raw:
        kw["analysis"] = _analysis(raw["analysis"], "analysis")
    if "power_densities" in raw:
        kw["power_densities"] = _float_list(raw["power_densities"], "power_densities", lo=0.0, what="power density")
    if "n_gates" in raw:
        kw["n_gates"] = _number(raw["n_gates"], "n_gates", integer=True)
        if kw["n_gates"] < 1:
            raise ConfigError("n_gates: must be >= 1")
    if "seed" in raw:
        kw["seed"] = _number(raw["seed"], "seed", integer=True)
        if kw["seed"] < 0:
            raise ConfigError("seed: must be >= 0")
    return RunConfig(**kw)


def parse_config(text: str) -> RunConfig:
    """Parse and validate a YAML configuration document."""
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"parse error{where}: {exc.problem}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"parse error: {exc}") from exc
    return config_from_dict(data)
