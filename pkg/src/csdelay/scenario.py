"""Scenario file schema (YAML), validated strictly: unknown keys are errors."""

import math
from pathlib import Path
from typing import Dict, List, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .defaults import DEFAULTS

KINDS = ("spectrum", "propagate", "temp-sweep", "spectral-delay", "pump-sweep", "fit")
FIT_MODELS = ("lifetime", "voigt", "g2", "transmission")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _finite_list(values):
    if not values:
        raise ValueError("sweep values must be non-empty")
    if not all(math.isfinite(v) for v in values):
        raise ValueError("sweep values must be finite")
    return values


class SourceConfig(_Strict):
    t1_s: float = Field(DEFAULTS["t1_s"], gt=0)
    nu0_offset_hz: float = 0.0
    inhom_fwhm_hz: float = Field(DEFAULTS["inhom_fwhm_hz"], ge=0)
    rise_time_s: float = Field(DEFAULTS["rise_time_s"], ge=0)


class CellConfig(_Strict):
    length_mm: float = Field(DEFAULTS["length_mm"], gt=0)
    temperature_c: float = DEFAULTS["temperature_c"]
    density_override_per_m3: Optional[float] = Field(None, ge=0)
    population_factor: float = Field(1.0, ge=0)

    @field_validator("temperature_c")
    @classmethod
    def _above_zero_kelvin(cls, v):
        if v <= -273.15:
            raise ValueError("temperature must be above absolute zero")
        return v


class FilterConfig(_Strict):
    nu_f_offset_hz: Optional[float] = None
    delta_theta_k: Optional[float] = None
    tuning_hz_per_k: float = DEFAULTS["filter_tuning_hz_per_k"]
    tuning_correction: float = Field(DEFAULTS["filter_tuning_correction"], gt=0, le=1)
    fwhm_hz: float = Field(DEFAULTS["filter_fwhm_hz"], gt=0)
    fsr_hz: float = Field(DEFAULTS["filter_fsr_hz"], gt=0)
    mode: Literal["transfer", "weight"] = DEFAULTS["filter_mode"]

    @model_validator(mode="after")
    def _one_position(self):
        if self.nu_f_offset_hz is not None and self.delta_theta_k is not None:
            raise ValueError("give either nu_f_offset_hz or delta_theta_k, not both")
        if self.tuning_hz_per_k == 0:
            raise ValueError("tuning_hz_per_k must be non-zero")
        if self.fsr_hz <= self.fwhm_hz:
            raise ValueError("fsr_hz must exceed fwhm_hz")
        return self


class PumpConfig(_Strict):
    gamma_per_s: float = Field(1.0, gt=0)
    ratios: List[float] = Field(default_factory=lambda: list(DEFAULTS["pump_ratios"]))
    mode: Literal["temperature-mimic", "density-scale"] = DEFAULTS["pump_mode"]

    @field_validator("ratios")
    @classmethod
    def _ratios(cls, v):
        _finite_list(v)
        if any(r < 0 for r in v):
            raise ValueError("pump ratios must be non-negative")
        if list(v) != sorted(v):
            raise ValueError("pump ratios must be sorted ascending")
        return v


class SweepConfig(_Strict):
    temperatures_c: Optional[List[float]] = None
    nu_f_offsets_hz: Optional[List[float]] = None
    photon_presets_hz: Optional[Dict[str, float]] = None
    include_ensemble: bool = True

    @field_validator("temperatures_c", "nu_f_offsets_hz")
    @classmethod
    def _values(cls, v):
        return v if v is None else _finite_list(v)


class GridConfig(_Strict):
    points: int = DEFAULTS["grid_points"]
    dt_s: float = Field(DEFAULTS["grid_dt_s"], gt=0)
    t_start_s: float = DEFAULTS["grid_t_start_s"]

    @field_validator("points")
    @classmethod
    def _pow2(cls, v):
        if v < 2 or v & (v - 1):
            raise ValueError("points must be a power of two")
        return v


class QuadratureConfig(_Strict):
    nodes: int = DEFAULTS["quadrature_nodes"]
    method: Literal["trapezoid", "hermite"] = DEFAULTS["quadrature_method"]

    @field_validator("nodes")
    @classmethod
    def _odd(cls, v):
        if v < 3 or v % 2 == 0:
            raise ValueError("nodes must be odd and >= 3")
        return v


class FitConfig(_Strict):
    model: Optional[Literal["lifetime", "voigt", "g2", "transmission"]] = None
    data_csv: str
    irf_fwhm_s: float = Field(DEFAULTS["irf_fwhm_s"], ge=0)
    lorentz_fwhm_hz: float = Field(DEFAULTS["lorentz_fwhm_hz"], gt=0)
    weighting: Literal["uniform", "poisson"] = DEFAULTS["weighting"]


class OutputConfig(_Strict):
    directory: Optional[str] = None
    waveform_stride: int = Field(DEFAULTS["waveform_stride"], ge=1)
    spectrum_stride: int = Field(DEFAULTS["spectrum_stride"], ge=1)


class Scenario(_Strict):
    kind: Optional[Literal["spectrum", "propagate", "temp-sweep", "spectral-delay", "pump-sweep", "fit"]] = None
    source: SourceConfig = SourceConfig()
    cell: CellConfig = CellConfig()
    filter: Optional[FilterConfig] = None
    pump: Optional[PumpConfig] = None
    sweep: SweepConfig = SweepConfig()
    irf_fwhm_s: Optional[float] = Field(None, ge=0)
    grid: GridConfig = GridConfig()
    quadrature: QuadratureConfig = QuadratureConfig()
    fit: Optional[FitConfig] = None
    output: OutputConfig = OutputConfig()

    @model_validator(mode="after")
    def _kind_requirements(self):
        if self.kind == "fit" and self.fit is None:
            raise ValueError("kind 'fit' needs a 'fit' section")
        if self.kind == "pump-sweep" and self.filter is None:
            raise ValueError("kind 'pump-sweep' needs a 'filter' section")
        return self


class ScenarioError(ValueError):
    pass


def format_validation_error(exc):
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "\n".join(lines)


def load_scenario(path, kind=None, fit_model=None):
    """Parse and validate a scenario file; ``kind`` comes from the subcommand."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ScenarioError(f"{path}: top level must be a mapping")
    if kind is not None:
        if raw.get("kind", kind) != kind:
            raise ScenarioError(f"{path}: kind {raw['kind']!r} does not match subcommand {kind!r}")
        raw["kind"] = kind
    if fit_model is not None and isinstance(raw.get("fit"), dict):
        if raw["fit"].get("model", fit_model) != fit_model:
            raise ScenarioError(f"{path}: fit.model {raw['fit']['model']!r} does not match {fit_model!r}")
        raw["fit"]["model"] = fit_model
    try:
        return Scenario.model_validate(raw)
    except ValidationError as exc:
        raise ScenarioError(f"{path}: invalid scenario\n{format_validation_error(exc)}") from exc
