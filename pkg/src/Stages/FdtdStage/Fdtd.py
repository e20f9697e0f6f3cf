"""
Two-dimensional Yee-grid time-domain solver producing complex transmission
spectra through a rasterized crystal.

Propagation is along x. The transverse direction y is periodic with the
grid's transverse period; both x ends are terminated by CPML layers backed
by a conducting wall. Fields are normalized (H scaled by the vacuum
impedance) so the update coefficient is the Courant number S = c dt / h.

Layout along x, in cells:

    | PML | source_offset | front_gap | crystal region | probe offset | tail | PML |
            ^ source line                              ^ probe line

TE (electric field along the rods): Ez on nodes, Hx on y-faces, Hy on x-faces.
TM (magnetic field along the rods): Hz on nodes, Ex on y-faces, Ey on x-faces.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

import settings
from errors import GeometryDomainError, GridBudgetError, NumericalInstabilityError, SourceBandwidthError
from knowledge_base import SWEEP_START_HZ, SWEEP_STEP_HZ, SWEEP_STOP_HZ
from provenance import stable_hash
from Stages.AnalysisStage.models import C0, ComplexSpectrum, SpectrumMeta
from Stages.FdtdStage.cpml import CpmlCoefficients, axis_coefficients
from Stages.FdtdStage.source import GaussianPulse
from Stages.GeometryStage.Geometry import PermittivityGrid

logger = logging.getLogger(__name__)

COURANT_LIMIT_2D = 1.0 / math.sqrt(2.0)
COURANT_MARGIN = 1e-9
MIN_PML_CELLS = 8
# Field magnitude, relative to the source amplitude, treated as a blow-up
INSTABILITY_RATIO = 1e6


class Polarization(str, Enum):
    """TE: E perpendicular to the plane of periodicity (along the rods). TM: E in the plane."""
    TE = "TE"
    TM = "TM"


class SweepSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    f_start: float = Field(default=SWEEP_START_HZ, gt=0.0)
    f_stop: float = Field(default=SWEEP_STOP_HZ, gt=0.0)
    f_step: float = Field(default=SWEEP_STEP_HZ, gt=0.0)

    @model_validator(mode="after")
    def _ordered(self) -> "SweepSpec":
        if not self.f_start < self.f_stop:
            raise ValueError(f"f_start {self.f_start:g} must be below f_stop {self.f_stop:g}")
        return self

    @property
    def points(self) -> int:
        return int(round((self.f_stop - self.f_start) / self.f_step)) + 1

    def freqs(self) -> np.ndarray:
        return self.f_start + np.arange(self.points) * self.f_step


class SimConfig(BaseModel):
    """Solver parameters. Lengths in meters, frequencies in Hz."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    cell_size: float = Field(default=0.25e-3, gt=0.0)
    courant_factor: float = Field(default=0.99 * COURANT_LIMIT_2D, gt=0.0)
    pml_thickness: int = Field(default=12, ge=MIN_PML_CELLS)
    source_center_freq: float = Field(default=11.0e9, gt=0.0)
    source_bandwidth: float = Field(default=10.0e9, gt=0.0)
    source_amplitude: float = Field(default=1.0, gt=0.0)
    source_offset: float = Field(default=10.0e-3, gt=0.0)
    front_gap: float = Field(default=15.0e-3, ge=0.0)
    probe_plane_offset: float = Field(default=30.0e-3, gt=0.0)
    tail: float = Field(default=10.0e-3, ge=0.0)
    run_time: Optional[int] = Field(default=None, gt=0)
    max_steps: int = Field(default=40000, gt=0)
    decay_threshold: float = Field(default=1e-6, gt=0.0, lt=1.0)
    check_interval: int = Field(default=50, gt=0)
    supersample: int = Field(default=4, ge=4)

    @model_validator(mode="after")
    def _stable(self) -> "SimConfig":
        if self.courant_factor > COURANT_LIMIT_2D * (1.0 + COURANT_MARGIN):
            raise ValueError(
                f"courant_factor {self.courant_factor:.6f} exceeds the 2D stability limit {COURANT_LIMIT_2D:.6f}"
            )
        return self

    def time_step(self, cell_size: Optional[float] = None) -> float:
        return self.courant_factor * (cell_size or self.cell_size) / C0

    def pulse(self) -> GaussianPulse:
        return GaussianPulse(self.source_center_freq, self.source_bandwidth, self.source_amplitude)


class DomainSpec(BaseModel):
    """Simulation domain shared by a crystal run and its vacuum reference."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    cell_size: float = Field(gt=0.0)
    ny: int = Field(gt=0)
    region_cells: int = Field(gt=0)

    @property
    def transverse_period(self) -> float:
        return self.ny * self.cell_size

    def layout(self, cfg: SimConfig) -> Dict[str, int]:
        """Node indices of the source line, crystal region and probe line."""
        h = self.cell_size
        pml = cfg.pml_thickness
        source = pml + max(1, round(cfg.source_offset / h))
        region_start = source + max(1, round(cfg.front_gap / h))
        region_end = region_start + self.region_cells
        probe = region_end + max(1, round(cfg.probe_plane_offset / h))
        nx = probe + max(1, round(cfg.tail / h)) + pml + 1
        return {
            "nx": nx,
            "source": source,
            "region_start": region_start,
            "region_end": region_end,
            "probe": probe,
        }


def domain_for(grid: PermittivityGrid, region_length: Optional[float] = None) -> DomainSpec:
    """
    Domain that holds `grid`, with a crystal slot of at least `region_length`.

    Runs of one campaign group pass the thickness of their largest crystal so
    all layer counts share a domain and therefore a reference run.
    """
    cells = grid.nx
    if region_length is not None:
        cells = max(cells, math.ceil(region_length / grid.cell_size - 1e-9))
    return DomainSpec(cell_size=grid.cell_size, ny=grid.ny, region_cells=max(1, cells))


@dataclass
class SimState:
    """Fields, CPML memory and running-DFT accumulators of one simulation."""
    fields: Dict[str, np.ndarray]
    psi: Dict[str, np.ndarray]
    dft: np.ndarray
    step: int = 0
    peak_energy: float = 0.0
    energy_trace: List[tuple] = field(default_factory=list)


class YeeSimulation:
    """
    Leapfrog driver for one polarization over a fixed permittivity map.

    eps is the full-domain relative permittivity on the node grid, shape (nx, ny).
    """

    def __init__(self, eps: np.ndarray, pol: Polarization, sweep: SweepSpec, cfg: SimConfig,
                 cell_size: float, source_index: int, probe_indices: Sequence[int]):
        self.pol = Polarization(pol)
        self.cfg = cfg
        self.cell_size = cell_size
        self.dt = cfg.time_step(cell_size)
        self.S = cfg.courant_factor
        self.pulse = cfg.pulse()
        self.source_index = int(source_index)
        self.probe_indices = [int(i) for i in probe_indices]
        self.omega = 2.0 * np.pi * sweep.freqs()

        eps = np.asarray(eps, dtype=float)
        nx, ny = eps.shape
        if nx * ny > settings.MAX_GRID_CELLS:
            raise GridBudgetError(f"domain of {nx} x {ny} cells exceeds budget of {settings.MAX_GRID_CELLS} cells")
        self.shape = (nx, ny)
        pml = cfg.pml_thickness
        extent = nx - 1
        nodes = np.arange(nx, dtype=float)
        self.node_pml: CpmlCoefficients = axis_coefficients(nodes, extent, pml, cell_size, self.dt)
        self.face_pml: CpmlCoefficients = axis_coefficients(nodes[:-1] + 0.5, extent, pml, cell_size, self.dt)

        if self.pol is Polarization.TE:
            self.inv_eps = 1.0 / eps
            fields = {"ez": np.zeros((nx, ny)), "hx": np.zeros((nx, ny)), "hy": np.zeros((nx - 1, ny))}
            psi = {"hy": np.zeros((nx - 1, ny)), "ez": np.zeros((nx - 2, ny))}
            self.eps_weights = {"ez": eps, "hx": 1.0, "hy": 1.0}
        else:
            eps_x = 0.5 * (eps + np.roll(eps, -1, axis=1))
            eps_y = 0.5 * (eps[:-1] + eps[1:])
            self.inv_eps_x = 1.0 / eps_x
            self.inv_eps_y = 1.0 / eps_y
            fields = {"hz": np.zeros((nx, ny)), "ex": np.zeros((nx, ny)), "ey": np.zeros((nx - 1, ny))}
            psi = {"ey": np.zeros((nx - 1, ny)), "hz": np.zeros((nx - 2, ny))}
            self.eps_weights = {"hz": 1.0, "ex": eps_x, "ey": eps_y}
        self.state = SimState(
            fields=fields,
            psi=psi,
            dft=np.zeros((len(self.probe_indices), self.omega.size), dtype=complex),
        )

    @property
    def line_field(self) -> str:
        """Component along the rods: source and probes act on it."""
        return "ez" if self.pol is Polarization.TE else "hz"

    def _step_te(self, source_value: float) -> None:
        f, psi, S = self.state.fields, self.state.psi, self.S
        fp, npml = self.face_pml, self.node_pml
        ez, hx, hy = f["ez"], f["hx"], f["hy"]

        d_ez = ez[1:] - ez[:-1]
        psi["hy"] *= fp.b
        psi["hy"] += fp.c * d_ez
        hy += S * (d_ez * fp.inv_kappa + psi["hy"])
        hx -= S * (np.roll(ez, -1, axis=1) - ez)

        d_hy = hy[1:] - hy[:-1]
        psi["ez"] *= npml.b[1:-1]
        psi["ez"] += npml.c[1:-1] * d_hy
        curl = d_hy * npml.inv_kappa[1:-1] + psi["ez"] - (hx - np.roll(hx, 1, axis=1))[1:-1]
        ez[1:-1] += S * self.inv_eps[1:-1] * curl
        ez[self.source_index] += source_value

    def _step_tm(self, source_value: float) -> None:
        f, psi, S = self.state.fields, self.state.psi, self.S
        fp, npml = self.face_pml, self.node_pml
        hz, ex, ey = f["hz"], f["ex"], f["ey"]

        d_hz = hz[1:] - hz[:-1]
        psi["ey"] *= fp.b
        psi["ey"] += fp.c * d_hz
        ey -= S * self.inv_eps_y * (d_hz * fp.inv_kappa + psi["ey"])
        ex += S * self.inv_eps_x * (np.roll(hz, -1, axis=1) - hz)

        d_ey = ey[1:] - ey[:-1]
        psi["hz"] *= npml.b[1:-1]
        psi["hz"] += npml.c[1:-1] * d_ey
        curl = (ex - np.roll(ex, 1, axis=1))[1:-1] - (d_ey * npml.inv_kappa[1:-1] + psi["hz"])
        hz[1:-1] += S * curl
        hz[self.source_index] += source_value

    def step(self) -> SimState:
        """Advance one time step and fold the probe samples into the running DFT."""
        state = self.state
        source_value = self.pulse(state.step * self.dt)
        if self.pol is Polarization.TE:
            self._step_te(source_value)
        else:
            self._step_tm(source_value)
        state.step += 1

        line = state.fields[self.line_field]
        samples = np.array([line[i].mean() for i in self.probe_indices])
        phasor = np.exp(1j * self.omega * state.step * self.dt)
        state.dft += samples[:, None] * phasor[None, :] * self.dt
        return state

    def energy(self) -> float:
        total = 0.0
        for name, values in self.state.fields.items():
            total += float(np.sum(self.eps_weights[name] * values * values))
        return 0.5 * total * self.cell_size ** 2

    def _check_finite(self) -> None:
        limit = INSTABILITY_RATIO * self.pulse.amplitude
        for name, values in self.state.fields.items():
            peak = float(np.max(np.abs(values)))
            if not math.isfinite(peak) or peak > limit:
                raise NumericalInstabilityError(
                    f"{name} reached {peak:.3g} (> {INSTABILITY_RATIO:.0e} x source amplitude) at step "
                    f"{self.state.step}; courant_factor={self.S:.6g} (2D limit {COURANT_LIMIT_2D:.6f}), "
                    f"pml_thickness={self.cfg.pml_thickness} cells"
                )

    def run(self) -> bool:
        """
        Step until the residual energy falls below decay_threshold x its peak
        once the source is off, or until run_time / max_steps.

        Returns:
            True if the energy criterion was met
        """
        cfg = self.cfg
        source_off = int(math.ceil(self.pulse.duration / self.dt))
        limit = cfg.run_time or cfg.max_steps
        state = self.state
        converged = False
        with np.errstate(over="ignore", invalid="ignore"):
            while state.step < limit:
                self.step()
                if state.step % cfg.check_interval:
                    continue
                self._check_finite()
                energy = self.energy()
                state.peak_energy = max(state.peak_energy, energy)
                state.energy_trace.append((state.step, energy))
                if state.step >= source_off and energy < cfg.decay_threshold * state.peak_energy:
                    converged = True
                    if cfg.run_time is None:
                        break
            self._check_finite()
        return converged

    def spectra(self) -> np.ndarray:
        """Running-DFT amplitudes, shape (probes, frequencies)."""
        return self.state.dft.copy()


def _embed(grid: Optional[PermittivityGrid], domain: DomainSpec, layout: Dict[str, int]) -> np.ndarray:
    eps = np.ones((layout["nx"], domain.ny))
    if grid is not None:
        if grid.ny != domain.ny or abs(grid.cell_size - domain.cell_size) > 1e-12 * domain.cell_size:
            raise GeometryDomainError(
                f"grid ({grid.nx} x {grid.ny}, h={grid.cell_size:g}) does not match domain "
                f"(ny={domain.ny}, h={domain.cell_size:g})"
            )
        if grid.nx > domain.region_cells:
            raise GeometryDomainError(f"grid of {grid.nx} cells does not fit a region of {domain.region_cells} cells")
        start = layout["region_start"]
        eps[start:start + grid.nx] = grid.eps_r
    return eps


def _check_band(sweep: SweepSpec, cfg: SimConfig) -> None:
    pulse = cfg.pulse()
    if not pulse.covers(sweep.f_start, sweep.f_stop):
        lo, hi = pulse.band()
        raise SourceBandwidthError(
            f"sweep {sweep.f_start / 1e9:.3f}-{sweep.f_stop / 1e9:.3f} GHz outside the source's -20 dB band "
            f"{lo / 1e9:.3f}-{hi / 1e9:.3f} GHz"
        )


def reference_cache_key(domain: DomainSpec, pol: Polarization, sweep: SweepSpec, cfg: SimConfig) -> str:
    """Hash of everything a vacuum reference depends on."""
    return stable_hash({
        "domain": domain.model_dump(),
        "pol": Polarization(pol).value,
        "sweep": sweep.model_dump(),
        "sim": cfg.model_dump(),
    })


def _simulate(grid: Optional[PermittivityGrid], domain: DomainSpec, pol: Polarization,
              sweep: SweepSpec, cfg: SimConfig, kind: str) -> ComplexSpectrum:
    _check_band(sweep, cfg)
    layout = domain.layout(cfg)
    eps = _embed(grid, domain, layout)
    sim = YeeSimulation(eps, pol, sweep, cfg, domain.cell_size, layout["source"], [layout["probe"]])
    logger.info("%s %s run: %d x %d cells, dt=%.4g s", kind, sim.pol.value, eps.shape[0], eps.shape[1], sim.dt)

    converged = sim.run()
    if not converged:
        logger.warning(
            "%s %s run stopped at %d steps before energy decayed below %.0e of peak",
            kind, sim.pol.value, sim.state.step, cfg.decay_threshold,
        )
    else:
        logger.info("%s %s run converged after %d steps", kind, sim.pol.value, sim.state.step)

    meta = SpectrumMeta(
        kind=kind,
        polarization=sim.pol.value,
        layers_N=grid.layers_N if grid is not None else 0,
        thickness=grid.thickness if grid is not None else 0.0,
        converged=converged,
        steps=sim.state.step,
        config_hash=reference_cache_key(domain, pol, sweep, cfg),
        comments=(
            f"cell_size={domain.cell_size!r}",
            f"nx={layout['nx']}",
            f"ny={domain.ny}",
            f"dt={sim.dt!r}",
        ),
    )
    return ComplexSpectrum(sweep.freqs(), sim.spectra()[0], meta)


def run_transmission(grid: PermittivityGrid, pol: Polarization, sweep: SweepSpec, cfg: SimConfig,
                     domain: Optional[DomainSpec] = None) -> ComplexSpectrum:
    """
    Raw probe spectrum of a crystal.

    Args:
        grid: rasterized crystal, placed at the start of the domain's crystal region
        pol: polarization
        sweep: frequencies to evaluate
        cfg: solver parameters
        domain: shared domain; defaults to one sized to the grid

    Raises:
        SourceBandwidthError: sweep outside the source band
        NumericalInstabilityError: fields blew up
        GridBudgetError: domain larger than PBG_MAX_GRID_CELLS
    """
    domain = domain or domain_for(grid)
    return _simulate(grid, domain, pol, sweep, cfg, kind="raw")


# Vacuum references by cache key
_reference_cache: Dict[str, ComplexSpectrum] = {}


def run_reference(domain: DomainSpec, pol: Polarization, sweep: SweepSpec, cfg: SimConfig) -> ComplexSpectrum:
    """Vacuum run of `domain`; identical keys return the cached spectrum."""
    key = reference_cache_key(domain, pol, sweep, cfg)
    if key in _reference_cache:
        logger.debug("reference cache hit %s", key)
        return _reference_cache[key]
    spectrum = _simulate(None, domain, pol, sweep, cfg, kind="reference")
    _reference_cache[key] = spectrum
    return spectrum


def clear_reference_cache() -> None:
    _reference_cache.clear()
