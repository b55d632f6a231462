"""Declarative project configuration.

A project is one YAML document. Every physical scalar is a unit-suffixed
string (``"30 pH_per_sq"``, ``"220 uA"``); plain numbers are accepted only for
counts and dimensionless ratios. Unknown keys are rejected at every level.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Annotated, Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, ValidationError, model_validator

from kitsim.cascade import DeviceSpec
from kitsim.cellmodel import (
    BiasState,
    CellElectricals,
    DielectricProperties,
    FilmProperties,
    LinearCapacitance,
    ParallelPlateCapacitance,
    UnitCellGeometry,
    finger_inductance,
)
from kitsim.errors import ConfigError
from kitsim.gainsim import CMEConfig
from kitsim.units import parse_quantity


def _q(unit: str):
    def convert(v):
        if v is None:
            return None
        return parse_quantity(v, unit)

    return BeforeValidator(convert)


Henry = Annotated[float, _q("H")]
HenryPerSquare = Annotated[float, _q("H/sq")]
Farad = Annotated[float, _q("F")]
FaradPerArea = Annotated[float, _q("F/m2")]
Ampere = Annotated[float, _q("A")]
Meter = Annotated[float, _q("m")]
Hertz = Annotated[float, _q("Hz")]
Kelvin = Annotated[float, _q("K")]
Ohm = Annotated[float, _q("ohm")]
Second = Annotated[float, _q("s")]
SquareMeter = Annotated[float, _q("m2")]


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class FilmConfig(_Model):
    sheet_inductance: HenryPerSquare
    scaling_current: Ampere
    scaling_current_4: Optional[Ampere] = None
    critical_current: Optional[Ampere] = None

    def build(self) -> FilmProperties:
        i4 = math.inf if self.scaling_current_4 is None else self.scaling_current_4
        return FilmProperties(self.sheet_inductance, self.scaling_current, i4, self.critical_current)


class DielectricConfig(_Model):
    relative_permittivity: float = Field(ge=1)
    thickness: Meter

    def build(self) -> DielectricProperties:
        return DielectricProperties(self.relative_permittivity, self.thickness)


class GeometryConfig(_Model):
    center_width: Meter
    stub_width: Meter
    stub_spacing: Meter
    squares_per_cell: Optional[float] = Field(default=None, gt=0)
    fringing: float = Field(default=1.0, gt=0)

    def build(self, stub_length: float = 0.0) -> UnitCellGeometry:
        return UnitCellGeometry(
            self.center_width, self.stub_width, self.stub_spacing, stub_length, self.squares_per_cell
        )


class CellConfig(_Model):
    """One cell flavour. Fitted values override the closed-form estimates."""

    stub_length: Meter
    target_impedance: Optional[Ohm] = None
    series_inductance: Optional[Henry] = None
    shunt_capacitance: Optional[Farad] = None
    finger_inductance: Optional[Henry] = None


class DeviceConfig(_Model):
    n_unloaded: int = Field(gt=0)
    n_loaded: int = Field(ge=0)
    n_supercells: int = Field(gt=0)
    z_ref: Ohm = 50.0
    unloaded: CellConfig
    loaded: CellConfig

    @model_validator(mode="after")
    def _even(self):
        if self.n_unloaded % 2:
            raise ValueError("n_unloaded must be even (the supercell is symmetric)")
        return self


class BiasConfig(_Model):
    dc_current: Ampere
    pump_amplitude: Ampere
    signal_amplitude: Ampere


class CalibrationRow(_Model):
    stub_length: Meter
    capacitance: Farad


class DesignConfig(_Model):
    stub_length_start: Meter = 0.0
    stub_length_stop: Meter = 40e-6
    stub_length_step: Meter = 0.1e-6
    inductance: Optional[Henry] = None
    capacitance_rows: list[CalibrationRow] = Field(default_factory=list)
    targets: list[Ohm] = Field(default_factory=list)

    @model_validator(mode="after")
    def _grid(self):
        if not (self.stub_length_stop > self.stub_length_start >= 0 and self.stub_length_step > 0):
            raise ValueError("stub-length grid needs 0 <= start < stop and step > 0")
        if len(self.capacitance_rows) == 1:
            raise ValueError("capacitance calibration needs at least two rows")
        return self


class Grid(_Model):
    start: Hertz
    stop: Hertz
    points: Optional[int] = Field(default=None, ge=1)
    step: Optional[Hertz] = None

    @model_validator(mode="after")
    def _shape(self):
        if (self.points is None) == (self.step is None):
            raise ValueError("give exactly one of points or step")
        if self.stop < self.start or self.start < 0:
            raise ValueError("grid needs 0 <= start <= stop")
        if self.step is not None and not self.step > 0:
            raise ValueError("step must be > 0")
        return self

    def values(self) -> np.ndarray:
        if self.points is not None:
            return np.linspace(self.start, self.stop, self.points)
        n = int(round((self.stop - self.start) / self.step)) + 1
        return np.linspace(self.start, self.start + (n - 1) * self.step, n)


class SweepConfig(_Model):
    frequency_grid: Grid
    pump_grid: Grid
    signal_grid: Grid
    depleted: bool = True
    harmonics: bool = False
    symmetric_band: bool = True
    rtol: float = Field(default=1e-8, gt=0)
    atol: float = Field(default=1e-12, gt=0)
    smoothing_window: int = Field(default=51, ge=1)
    bandgap_threshold_db: float = -10.0
    dispersion_step: Hertz = 1e6
    dispersion_baseline: Literal["unloaded", "supercell"] = "unloaded"


class ConventionConfig(_Model):
    transmittivity: Literal["amplitude", "power"] = "amplitude"
    photon_energy: Literal["angular", "quoted"] = "angular"


class NoiseConfig(_Model):
    eta0_losses_db: list[float]
    eta1_losses_db: list[float]
    gain_ratio: float = Field(default=1.0, ge=0)
    thermal_temperature: Kelvin = 0.05
    fit_region: Literal["full", "asymptotic"] = "full"
    min_bias_ratio: float = Field(default=5.0, gt=0)
    bandwidth_factor: float = Field(default=2.0, gt=1)
    even_split: bool = True


class ScalingFitConfig(_Model):
    frequency: Optional[Hertz] = None
    traversal_time: Optional[Second] = None
    min_points: int = Field(default=8, ge=3)


class IcFitConfig(_Model):
    threshold_db: float = Field(default=10.0, gt=0)
    baseline_fraction: float = Field(default=0.25, gt=0, le=1)


class TdrFitConfig(_Model):
    z_ref: Ohm = 50.0
    threshold: float = Field(default=1.0, gt=0)


class IipFitConfig(_Model):
    slope_tolerance: float = Field(default=0.05, gt=0)
    compression_db: float = Field(default=1.0, gt=0)
    noise_floor_dbm: Optional[float] = None
    linear_db: float = Field(default=0.05, gt=0)


class RtFitConfig(_Model):
    n_squares: float = Field(default=500.0, gt=0)
    plateau_fraction: float = Field(default=0.1, gt=0, lt=1)


class ResonanceFitConfig(_Model):
    total_inductance: Optional[Henry] = None
    plate_area: Optional[SquareMeter] = None
    thickness: Optional[Meter] = None
    kind: Literal["dip", "peak"] = "dip"


class FitConfig(_Model):
    scaling: ScalingFitConfig = ScalingFitConfig()
    ic: IcFitConfig = IcFitConfig()
    tdr: TdrFitConfig = TdrFitConfig()
    iip: IipFitConfig = IipFitConfig()
    rt: RtFitConfig = RtFitConfig()
    resonance: ResonanceFitConfig = ResonanceFitConfig()


class OutputConfig(_Model):
    directory: str = "kitsim-run"


class ProjectConfig(_Model):
    film: FilmConfig
    dielectric: DielectricConfig
    geometry: GeometryConfig
    device: DeviceConfig
    bias: BiasConfig
    design: DesignConfig = DesignConfig()
    sweep: Optional[SweepConfig] = None
    conventions: ConventionConfig = ConventionConfig()
    noise: Optional[NoiseConfig] = None
    fit: FitConfig = FitConfig()
    output: OutputConfig = OutputConfig()

    # -- domain objects -----------------------------------------------------

    def film_properties(self) -> FilmProperties:
        return self.film.build()

    def dielectric_properties(self) -> DielectricProperties:
        return self.dielectric.build()

    def capacitance_model(self):
        rows = self.design.capacitance_rows
        if rows:
            return LinearCapacitance.from_rows([(r.stub_length, r.capacitance) for r in rows])
        return ParallelPlateCapacitance(
            self.geometry.build(), self.dielectric_properties(), self.geometry.fringing
        )

    def cell(self, which: Literal["unloaded", "loaded"]) -> CellElectricals:
        cfg: CellConfig = getattr(self.device, which)
        film = self.film_properties()
        geom = self.geometry.build(cfg.stub_length)
        est = CellElectricals.from_geometry(geom, film, self.dielectric_properties(), self.geometry.fringing)
        ind = cfg.series_inductance if cfg.series_inductance is not None else (
            self.design.inductance if self.design.inductance is not None else est.series_inductance
        )
        if cfg.shunt_capacitance is not None:
            cap = cfg.shunt_capacitance
        else:
            cap = float(self.capacitance_model()(cfg.stub_length))
        lf = cfg.finger_inductance if cfg.finger_inductance is not None else finger_inductance(geom, film)
        return CellElectricals(ind, cap, lf, geom.pitch)

    def bias_state(self) -> BiasState:
        return BiasState(self.bias.dc_current, self.bias.pump_amplitude, self.bias.signal_amplitude)

    def device_spec(self) -> DeviceSpec:
        d = self.device
        return DeviceSpec(
            self.cell("unloaded"), self.cell("loaded"), d.n_unloaded, d.n_loaded, d.n_supercells,
            self.bias_state(), self.film_properties(), d.z_ref,
        )

    def require_sweep(self) -> SweepConfig:
        if self.sweep is None:
            raise ConfigError("config has no 'sweep' section")
        return self.sweep

    def cme_template(self) -> CMEConfig:
        sw = self.require_sweep()
        signals = sw.signal_grid.values()
        pumps = sw.pump_grid.values()
        # template pump above the whole signal grid; each sweep point re-targets it
        f_template = max(float(pumps.max()), float(signals.max())) * 1.01 + 1e6
        return CMEConfig(
            f_template, self.bias.pump_amplitude, self.bias.signal_amplitude, signals,
            harmonics=sw.harmonics, depleted=sw.depleted, rtol=sw.rtol, atol=sw.atol,
        )


def _format_errors(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        msg = err["msg"]
        if msg.startswith("Value error, "):
            msg = msg[len("Value error, "):]
        parts.append(f"{loc}: {msg}")
    return "; ".join(parts)


def load_config_text(text: str, source: str = "<string>") -> ProjectConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: YAML parse error: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    try:
        return ProjectConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"{source}: {_format_errors(exc)}") from exc


def load_config(path) -> ProjectConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    return load_config_text(text, str(path))
