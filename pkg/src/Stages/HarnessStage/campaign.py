"""
Campaign expansion, content hashing and the run manifest.

A campaign is the crystal x polarization x layer-count grid of a run
description. Runs sharing (AFF, orientation, polarization) form a group; all
runs of a group, and every group with the same lattice, share one simulation
domain sized for the thickest crystal, so a single vacuum reference serves
them all.

Output layout:

    <out>/manifest.json
    <out>/<run_hash>/raw/spectrum.csv, spectrum.s1p
    <out>/<run_hash>/norm/spectrum.csv, spectrum.s1p
    <out>/<reference_hash>/ref/spectrum.csv, spectrum.s1p
"""
import logging
import math
from collections import defaultdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from errors import CampaignError
from provenance import CODE_VERSION, stable_hash
from Stages.FdtdStage.Fdtd import DomainSpec, Polarization, SimConfig, SweepSpec, reference_cache_key
from Stages.GeometryStage.Geometry import CrystalSpec, Orientation, RodModel, crystal_thickness, lattice_frame
from Stages.IOStage.Config import RunDescription

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"

Status = Literal["ok", "failed"]


class RunSpec(BaseModel):
    """Immutable description of one crystal simulation handed to a worker."""
    model_config = ConfigDict(frozen=True)

    group: str
    aff: float
    crystal: CrystalSpec
    pol: Polarization
    sweep: SweepSpec
    sim: SimConfig
    domain: DomainSpec

    @property
    def layers_N(self) -> int:
        return self.crystal.layers_N

    @property
    def thickness(self) -> float:
        return crystal_thickness(self.crystal)

    @property
    def run_hash(self) -> str:
        return stable_hash({
            "crystal": self.crystal.model_dump(mode="json"),
            "pol": self.pol.value,
            "sweep": self.sweep.model_dump(),
            "sim": self.sim.model_dump(),
            "domain": self.domain.model_dump(),
        })

    @property
    def reference_hash(self) -> str:
        return reference_cache_key(self.domain, self.pol, self.sweep, self.sim)


def group_name(aff: float, orientation: Orientation, pol: Polarization) -> str:
    return f"aff{aff:.3f}_{Orientation(orientation).value}_{Polarization(pol).value}"


def shared_domain(spec: CrystalSpec, max_layers: int, cell_size: float) -> DomainSpec:
    """Domain for a lattice, sized for its thickest crystal; matches rasterize's snapped cell."""
    _, period = lattice_frame(spec.orientation, spec.lattice_constant_a)
    ny = max(1, math.ceil(period / cell_size - 1e-9))
    h = period / ny
    thickness = crystal_thickness(spec.with_layers(max_layers))
    return DomainSpec(cell_size=h, ny=ny, region_cells=max(1, math.ceil(thickness / h - 1e-9)))


class Campaign:
    """Runs of a description, in a fixed order (AFF descending, orientation, polarization, N)."""

    def __init__(self, description: RunDescription):
        if description.crystal is None:
            raise CampaignError("configuration has no crystal section; nothing to simulate")
        self.description = description
        crystal = description.crystal
        max_layers = max(crystal.layers)
        runs: List[RunSpec] = []
        for aff in crystal.aff:
            base = crystal.spec(aff)
            domain = shared_domain(base, max_layers, description.sim.cell_size)
            for pol in description.polarizations:
                group = group_name(aff, crystal.orientation, pol)
                for layers in crystal.layers:
                    runs.append(RunSpec(
                        group=group,
                        aff=aff,
                        crystal=base.with_layers(layers),
                        pol=pol,
                        sweep=description.sweep,
                        sim=description.sim,
                        domain=domain,
                    ))
        hashes = [run.run_hash for run in runs]
        if len(set(hashes)) != len(hashes):
            raise CampaignError("duplicate run configurations in campaign")
        self.runs = runs

    def groups(self) -> Dict[str, List[RunSpec]]:
        grouped: Dict[str, List[RunSpec]] = defaultdict(list)
        for run in self.runs:
            grouped[run.group].append(run)
        return dict(grouped)

    def references(self) -> Dict[str, RunSpec]:
        """One representative run per distinct reference hash."""
        refs: Dict[str, RunSpec] = {}
        for run in self.runs:
            refs.setdefault(run.reference_hash, run)
        return refs


class RunRecord(BaseModel):
    run_hash: str
    group: str
    aff: float
    layers_N: int
    pol: Polarization
    orientation: Orientation
    rod_model: RodModel
    thickness: float
    reference_hash: str
    status: Status
    error: Optional[str] = None
    converged: Optional[bool] = None
    cached: bool = False
    artifacts: Dict[str, str] = Field(default_factory=dict)


class ReferenceRecord(BaseModel):
    reference_hash: str
    pol: Polarization
    status: Status
    error: Optional[str] = None
    converged: Optional[bool] = None
    cached: bool = False
    artifacts: Dict[str, str] = Field(default_factory=dict)


class Manifest(BaseModel):
    config_hash: str
    code_version: str = CODE_VERSION
    description: dict
    runs: List[RunRecord]
    references: List[ReferenceRecord]
    fdtd_invocations: int = 0
    created: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())

    @property
    def all_ok(self) -> bool:
        return all(r.status == "ok" for r in self.runs) and all(r.status == "ok" for r in self.references)

    def sorted(self) -> "Manifest":
        """Ordering independent of worker scheduling."""
        runs = sorted(self.runs, key=lambda r: (r.group, r.layers_N, r.run_hash))
        references = sorted(self.references, key=lambda r: r.reference_hash)
        return self.model_copy(update={"runs": runs, "references": references})


def write_manifest(out_dir: Path, manifest: Manifest) -> Path:
    path = Path(out_dir) / MANIFEST_NAME
    path.write_text(manifest.sorted().model_dump_json(indent=2), encoding="utf-8")
    return path


def read_manifest(in_dir: Path) -> Manifest:
    path = Path(in_dir) / MANIFEST_NAME
    if not path.exists():
        raise CampaignError(f"no {MANIFEST_NAME} in {in_dir}; run 'simulate' first")
    return Manifest.model_validate_json(path.read_text(encoding="utf-8"))


def layers_contiguous(layers: List[int]) -> bool:
    """At least two layer counts with no gaps between them."""
    layers = sorted(layers)
    return len(layers) >= 2 and layers == list(range(layers[0], layers[0] + len(layers)))
