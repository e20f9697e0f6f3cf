"""
Run configuration: a JSON (or TOML) document validated into a RunDescription.

    {
      "description": "AFF 0.60 layer campaign",
      "crystal": {"aff": [0.60, 0.32], "layers": "1..18", "orientation": "GammaM"},
      "polarizations": ["TE", "TM"],
      "sweep": {"f_start": 8e9, "f_stop": 14e9, "f_step": 15e6},
      "sim": {"cell_size": 0.25e-3},
      "analysis": {"threshold_db": 10},
      "calibration": {"thicknesses": [0.00635, 0.0127, 0.0254]}
    }

Top-level shorthands `aff`, `layers`, `pol`, `orientation`, `rod_model` and
`preset` are moved into their sections before validation.
"""
import json
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, ValidationInfo, field_validator, model_validator

from errors import ConfigError, GeometryDomainError
from knowledge_base import (
    ACRYLIC_INDEX,
    CALIBRATION_THICKNESSES,
    CALIBRATION_TOLERANCE,
    ROD_OUTER_RADIUS,
    get_preset,
)
from provenance import stable_hash
from Stages.FdtdStage.Fdtd import Polarization, SimConfig, SweepSpec
from Stages.GeometryStage.Geometry import (
    CrystalSpec,
    Orientation,
    RodModel,
    solid_rod_radius_for_aff,
    tube_inner_radius_for_aff,
)

SHORTHANDS = {
    "aff": ("crystal", "aff"),
    "layers": ("crystal", "layers"),
    "orientation": ("crystal", "orientation"),
    "rod_model": ("crystal", "rod_model"),
    "pol": ("polarizations", None),
}


def parse_layers(value: Union[int, str, List[int]]) -> List[int]:
    """18, [1, 2, 3] or "1..18" -> sorted unique layer counts."""
    if isinstance(value, bool):
        raise ValueError("layers must be integers")
    if isinstance(value, int):
        layers = [value]
    elif isinstance(value, str):
        lo, sep, hi = value.partition("..")
        try:
            layers = list(range(int(lo), int(hi) + 1)) if sep else [int(value)]
        except ValueError:
            raise ValueError(f"cannot read layer range {value!r} (use e.g. '1..18')")
    else:
        layers = [int(v) for v in value]
    if not layers:
        raise ValueError("at least one layer count is required")
    if any(n < 0 for n in layers):
        raise ValueError("layer counts must be >= 0")
    return sorted(set(layers))


class CrystalConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    rod_model: RodModel = RodModel.TUBE
    outer_radius: float = Field(default=ROD_OUTER_RADIUS, gt=0.0)
    lattice_constant: Optional[float] = Field(default=None, gt=0.0)
    rod_index: float = Field(default=ACRYLIC_INDEX, ge=1.0)
    orientation: Orientation = Orientation.GAMMA_M
    aff: List[float]
    layers: List[int]

    @field_validator("aff", mode="before")
    @classmethod
    def _as_list(cls, value: Any) -> Any:
        return [value] if isinstance(value, (int, float)) else value

    @field_validator("aff")
    @classmethod
    def _reachable(cls, value: List[float], info: ValidationInfo) -> List[float]:
        model = info.data.get("rod_model", RodModel.TUBE)
        failures = []
        for aff in value:
            try:
                _radii(model, aff, info.data.get("outer_radius", ROD_OUTER_RADIUS), info.data.get("lattice_constant"))
            except GeometryDomainError as e:
                failures.append(str(e))
        if failures:
            raise ValueError("; ".join(failures))
        return sorted(set(value), reverse=True)

    @field_validator("layers", mode="before")
    @classmethod
    def _layers(cls, value: Any) -> List[int]:
        return parse_layers(value)

    @model_validator(mode="after")
    def _tube_lattice(self) -> "CrystalConfig":
        if self.rod_model is RodModel.TUBE and self.lattice_constant is not None \
                and abs(self.lattice_constant - 2.0 * self.outer_radius) > 1e-12:
            raise ValueError("tube model uses touching rods; leave lattice_constant unset or equal to 2 * outer_radius")
        return self

    def spec(self, aff: float, layers: int = 0) -> CrystalSpec:
        R, r, a = _radii(self.rod_model, aff, self.outer_radius, self.lattice_constant)
        return CrystalSpec(
            outer_radius_R=R,
            inner_radius_r=r,
            lattice_constant_a=a,
            rod_index=self.rod_index,
            layers_N=layers,
            orientation=self.orientation,
            rod_model=self.rod_model,
        )


def _radii(model: RodModel, aff: float, outer_radius: float, lattice_constant: Optional[float]) -> Tuple[float, float, float]:
    """(R, r, a) realizing `aff` with the given rod model."""
    if RodModel(model) is RodModel.TUBE:
        return outer_radius, tube_inner_radius_for_aff(aff, outer_radius), 2.0 * outer_radius
    a = lattice_constant or 2.0 * outer_radius
    return solid_rod_radius_for_aff(aff, a), 0.0, a


class AnalysisConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    threshold_db: float = Field(default=10.0, gt=0.0)
    zero_tol: float = Field(default=0.05, gt=0.0, lt=1.0)
    smoothing_window: Optional[int] = Field(default=None, ge=5)
    far_margin: float = Field(default=0.5e9, ge=0.0)
    slip_threshold: float = Field(default=-math.pi, lt=0.0)
    anchor: Literal["dc", "none"] = "dc"
    layer_unwrap: bool = True
    dc_fit_points: int = Field(default=10, ge=2)

    @field_validator("smoothing_window")
    @classmethod
    def _odd(cls, value: Optional[int]) -> Optional[int]:
        if value is not None and value % 2 == 0:
            raise ValueError("smoothing_window must be odd")
        return value


class CalibrationConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    thicknesses: List[float] = Field(default_factory=lambda: list(CALIBRATION_THICKNESSES))
    index: float = Field(default=ACRYLIC_INDEX, gt=1.0)
    tolerance: float = Field(default=CALIBRATION_TOLERANCE, gt=0.0)

    @field_validator("thicknesses")
    @classmethod
    def _distinct(cls, value: List[float]) -> List[float]:
        if any(not d > 0 for d in value):
            raise ValueError("slab thicknesses must be positive")
        if len(set(value)) < 2:
            raise ValueError("calibration needs at least two distinct slab thicknesses")
        return sorted(value)


class RunDescription(BaseModel):
    """Validated, fully defaulted run configuration."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    description: str = ""
    crystal: Optional[CrystalConfig] = None
    polarizations: List[Polarization] = Field(default_factory=lambda: [Polarization.TE, Polarization.TM])
    sweep: SweepSpec = Field(default_factory=SweepSpec)
    sim: SimConfig = Field(default_factory=SimConfig)
    analysis: AnalysisConfig = Field(default_factory=AnalysisConfig)
    calibration: CalibrationConfig = Field(default_factory=CalibrationConfig)

    @field_validator("polarizations", mode="before")
    @classmethod
    def _polarizations(cls, value: Any) -> Any:
        if isinstance(value, str):
            return ["TE", "TM"] if value.lower() == "both" else [value]
        return value

    @field_validator("polarizations")
    @classmethod
    def _unique(cls, value: List[Polarization]) -> List[Polarization]:
        if not value:
            raise ValueError("at least one polarization is required")
        return sorted(set(value), key=lambda p: p.value)

    @model_validator(mode="after")
    def _consistent(self) -> "RunDescription":
        failures = []
        pulse = self.sim.pulse()
        if not pulse.covers(self.sweep.f_start, self.sweep.f_stop):
            lo, hi = pulse.band()
            failures.append(
                f"sweep {self.sweep.f_start:g}-{self.sweep.f_stop:g} Hz outside the source -20 dB band {lo:g}-{hi:g} Hz"
            )
        if self.crystal is not None:
            for aff in self.crystal.aff:
                R = self.crystal.spec(aff).outer_radius_R
                if self.sim.cell_size > R / 8.0 * (1 + 1e-9):
                    failures.append(f"cell_size {self.sim.cell_size:g} m exceeds R/8 = {R / 8.0:g} m for AFF {aff}")
        if failures:
            raise ValueError("; ".join(failures))
        return self

    def config_hash(self) -> str:
        return stable_hash(self.model_dump(mode="json"))

    def with_resolution(self, factor: float) -> "RunDescription":
        """Same run with the cell size divided by `factor`."""
        sim = self.sim.model_copy(update={"cell_size": self.sim.cell_size / factor})
        return self.model_copy(update={"sim": sim})

    def with_orientation(self, orientation: Orientation) -> "RunDescription":
        if self.crystal is None:
            return self
        crystal = self.crystal.model_copy(update={"orientation": Orientation(orientation)})
        return self.model_copy(update={"crystal": crystal})


def _hoist(raw: Dict[str, Any], failures: List[str]) -> Dict[str, Any]:
    doc = dict(raw)
    for short, (section, key) in SHORTHANDS.items():
        if short not in doc:
            continue
        value = doc.pop(short)
        if key is None:
            if section in doc:
                failures.append(f"{short}: given together with '{section}'")
            doc[section] = value
            continue
        target = doc.get(section) or {}
        if not isinstance(target, dict):
            failures.append(f"{section}: must be a section of key-value pairs")
            continue
        target = dict(target)
        if key in target:
            failures.append(f"{short}: given both at top level and in '{section}'")
        target[key] = value
        doc[section] = target

    preset_id = doc.pop("preset", None)
    if preset_id is not None:
        preset = get_preset(str(preset_id))
        if preset is None:
            failures.append(f"preset: unknown preset {preset_id!r}")
        else:
            crystal = doc.get("crystal") or {}
            crystal = dict(crystal) if isinstance(crystal, dict) else crystal
            if isinstance(crystal, dict):
                for key in ("aff", "rod_model", "outer_radius", "rod_index", "layers"):
                    crystal.setdefault(key, preset[key])
            doc["crystal"] = crystal
    return doc


def _parse_document(text: str) -> Dict[str, Any]:
    try:
        return json.loads(text)
    except json.JSONDecodeError as json_error:
        try:
            return tomllib.loads(text)
        except tomllib.TOMLDecodeError:
            raise ConfigError([f"not valid JSON ({json_error}) or TOML"])


def load_config(data: Union[bytes, str]) -> RunDescription:
    """
    Validate a configuration document.

    Raises:
        ConfigError: unknown keys or invariant violations, all of them listed
    """
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as e:
            raise ConfigError([f"configuration is not UTF-8: {e.reason}"])
    raw = _parse_document(data)
    if not isinstance(raw, dict):
        raise ConfigError(["configuration must be a key-value document"])

    failures: List[str] = []
    doc = _hoist(raw, failures)
    try:
        description = RunDescription.model_validate(doc)
    except ValidationError as e:
        for error in e.errors():
            location = ".".join(str(part) for part in error["loc"]) or "config"
            failures.append(f"{location}: {error['msg']}")
        raise ConfigError(failures)
    if failures:
        raise ConfigError(failures)
    return description
