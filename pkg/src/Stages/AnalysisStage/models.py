"""
Data types exchanged between the simulation, analysis, io and harness stages.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

C0 = 299_792_458.0

# Fields evolve as exp(-i w t); phase delay through vacuum is positive
PHASE_CONVENTION = "exp(-iwt)"

SpectrumKind = Literal["raw", "reference", "normalized", "measured"]
Regime = Literal["subluminal", "superluminal", "infinite", "negative"]
REGIMES: Tuple[str, ...] = ("subluminal", "superluminal", "infinite", "negative")


class SpectrumMeta(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: SpectrumKind = "measured"
    polarization: Optional[str] = None
    layers_N: Optional[int] = None
    thickness: Optional[float] = None
    converged: bool = True
    steps: Optional[int] = None
    config_hash: Optional[str] = None
    convention: str = PHASE_CONVENTION
    comments: Tuple[str, ...] = ()


def _is_uniform(freqs: np.ndarray) -> bool:
    if freqs.size < 3:
        return True
    steps = np.diff(freqs)
    return bool(np.all(np.abs(steps - steps.mean()) <= 1e-9 * np.abs(freqs).max()))


@dataclass(frozen=True, eq=False)
class ComplexSpectrum:
    """Frequency-indexed complex amplitudes (probe data, reference, or t(w))."""
    freqs: np.ndarray
    values: np.ndarray
    meta: SpectrumMeta = field(default_factory=SpectrumMeta)

    def __post_init__(self):
        freqs = np.array(self.freqs, dtype=float).reshape(-1)
        values = np.array(self.values, dtype=complex).reshape(-1)
        if freqs.shape != values.shape:
            raise ValueError(f"{freqs.size} frequencies but {values.size} values")
        if freqs.size > 1 and np.any(np.diff(freqs) <= 0):
            raise ValueError("frequencies must be strictly ascending")
        if not _is_uniform(freqs):
            raise ValueError("frequencies must be uniformly spaced")
        freqs.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.freqs.size

    @property
    def omega(self) -> np.ndarray:
        return 2.0 * np.pi * self.freqs

    def with_meta(self, **updates: Any) -> "ComplexSpectrum":
        return ComplexSpectrum(self.freqs, self.values, self.meta.model_copy(update=updates))


@dataclass(frozen=True, eq=False)
class DispersionResult:
    """Unwrapped phase delay, phase index and group index on one frequency grid."""
    freqs: np.ndarray
    delta_phi: np.ndarray
    n: np.ndarray
    n_g: np.ndarray
    dn_domega: np.ndarray
    m_corrections: int = 0
    d: float = 0.0
    c: float = C0
    regime: Optional[np.ndarray] = None
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        size = np.asarray(self.freqs).size
        for name in ("delta_phi", "n", "n_g", "dn_domega"):
            if np.asarray(getattr(self, name)).size != size:
                raise ValueError(f"{name} length differs from freqs")
        if not np.all(np.isfinite(self.n)):
            raise ValueError("phase index must be finite")
        if self.regime is not None and np.asarray(self.regime).size != size:
            raise ValueError("regime length differs from freqs")

    @property
    def omega(self) -> np.ndarray:
        return 2.0 * np.pi * np.asarray(self.freqs)


class BandgapReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    f_low: float
    f_high: float
    f_center: float
    depth_dB: float
    passband_dB: float
    threshold_dB: float
    polarization: Optional[str] = None

    @model_validator(mode="after")
    def _ordered(self) -> "BandgapReport":
        if not (self.f_low < self.f_center < self.f_high):
            raise ValueError("gap edges must satisfy f_low < f_center < f_high")
        if self.depth_dB < self.threshold_dB:
            raise ValueError("gap depth below detection threshold")
        return self

    @property
    def width(self) -> float:
        return self.f_high - self.f_low

    def contains(self, f: float) -> bool:
        return self.f_low <= f <= self.f_high


class RegimeSegment(BaseModel):
    model_config = ConfigDict(frozen=True)

    f_start: float
    f_end: float
    regime: Regime


class RegimeSegments(BaseModel):
    model_config = ConfigDict(frozen=True)

    segments: List[RegimeSegment]
    zero_tol: float
    f_step: float


class FarFromGapCheck(BaseModel):
    model_config = ConfigDict(frozen=True)

    passed: bool
    max_dispersion: float
    margin: float
    limit: float


class AnomalousBand(BaseModel):
    model_config = ConfigDict(frozen=True)

    f_start: float
    f_end: float
    min_dn_domega: float
    zero_crossings: List[float]


class SlabFitReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    index: float
    thicknesses: List[float]
    slopes: List[float]
    indices: List[float]
    residuals: List[float]
