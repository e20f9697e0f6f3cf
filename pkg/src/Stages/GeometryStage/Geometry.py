"""
Hexagonal rod-lattice geometry.

Builds the rod centers of a triangular lattice of hollow (Tube) or solid
dielectric rods, parameterized by air-filling fraction (AFF), and rasterizes
them to a relative-permittivity grid that is periodic in the transverse
direction.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

import settings
from errors import GeometryDomainError, GridBudgetError
from knowledge_base import ACRYLIC_INDEX, ROD_OUTER_RADIUS

logger = logging.getLogger(__name__)

SQRT3 = math.sqrt(3.0)

# Touching solid rods leave only the interstitial air
MIN_TOUCHING_AFF = 1.0 - math.pi / (2.0 * SQRT3)


class Orientation(str, Enum):
    """Propagation direction relative to the lattice."""
    GAMMA_M = "GammaM"
    GAMMA_K = "GammaK"


class RodModel(str, Enum):
    SOLID = "Solid"
    TUBE = "Tube"


class CrystalSpec(BaseModel):
    """Geometric and material description of the hexagonal rod lattice."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    outer_radius_R: float = Field(default=ROD_OUTER_RADIUS, ge=0.0)
    inner_radius_r: float = Field(default=0.0, ge=0.0)
    lattice_constant_a: float = Field(default=2.0 * ROD_OUTER_RADIUS, gt=0.0)
    rod_index: float = Field(default=ACRYLIC_INDEX, ge=1.0)
    layers_N: int = Field(default=0, ge=0)
    orientation: Orientation = Orientation.GAMMA_M
    rod_model: RodModel = RodModel.TUBE

    @model_validator(mode="after")
    def _check_radii(self) -> "CrystalSpec":
        R, r, a = self.outer_radius_R, self.inner_radius_r, self.lattice_constant_a
        if self.rod_model is RodModel.SOLID and r != 0.0:
            raise ValueError("solid rods require inner_radius_r = 0")
        # R = r = 0 is the empty lattice
        if not (r < R or (r == 0.0 and R == 0.0)):
            raise ValueError(f"inner radius {r} must be smaller than outer radius {R}")
        if R > 0.5 * a * (1.0 + 1e-12):
            raise ValueError(f"outer radius {R} exceeds half the lattice constant {a}")
        if self.rod_model is RodModel.TUBE and abs(a - 2.0 * R) > 1e-12 * a:
            raise ValueError("tube model requires touching rods (lattice_constant_a = 2 * outer_radius_R)")
        return self

    def with_layers(self, layers: int) -> "CrystalSpec":
        return self.model_copy(update={"layers_N": int(layers)})


@dataclass(frozen=True, eq=False)
class PermittivityGrid:
    """
    Rasterized relative permittivity over the crystal region.

    eps_r is indexed [ix, iy]: ix runs along propagation (x), iy along the
    periodic transverse direction. Cell (ix, iy) covers
    [ix*h, (ix+1)*h] x [iy*h, (iy+1)*h].
    """
    eps_r: np.ndarray
    cell_size: float
    transverse_period: float
    thickness: float = 0.0
    layers_N: int = 0
    rod_index: float = 1.0

    def __post_init__(self):
        eps = np.asarray(self.eps_r, dtype=float)
        if eps.ndim != 2:
            raise ValueError("eps_r must be two-dimensional")
        if np.any(eps < 1.0 - 1e-12):
            raise ValueError("relative permittivity must be >= 1 everywhere")
        ny = eps.shape[1]
        if abs(ny * self.cell_size - self.transverse_period) > 1e-9 * self.transverse_period:
            raise ValueError("ny * cell_size must equal the transverse period")
        eps.setflags(write=False)
        object.__setattr__(self, "eps_r", eps)

    @property
    def nx(self) -> int:
        return self.eps_r.shape[0]

    @property
    def ny(self) -> int:
        return self.eps_r.shape[1]


def unit_cell_area(a: float) -> float:
    return 0.5 * SQRT3 * a * a


def rod_cross_section(spec: CrystalSpec) -> float:
    return math.pi * (spec.outer_radius_R ** 2 - spec.inner_radius_r ** 2)


def aff_of_spec(spec: CrystalSpec) -> float:
    """Air area per unit cell over the unit-cell area (sqrt(3)/2) a^2."""
    return 1.0 - rod_cross_section(spec) / unit_cell_area(spec.lattice_constant_a)


def tube_inner_radius_for_aff(aff: float, R: float) -> float:
    """
    Inner radius of touching tubes (a = 2R) that yields the requested AFF.

    Raises:
        GeometryDomainError: aff below the interstitial minimum or not below 1
    """
    if not (MIN_TOUCHING_AFF - 1e-12 <= aff < 1.0):
        raise GeometryDomainError(
            f"AFF {aff} not reachable with touching tubes; need {MIN_TOUCHING_AFF:.5f} <= AFF < 1"
        )
    if R <= 0.0:
        raise GeometryDomainError("outer radius must be positive")
    x = 1.0 - (1.0 - aff) * 2.0 * SQRT3 / math.pi
    return R * math.sqrt(max(x, 0.0))


def solid_rod_radius_for_aff(aff: float, a: float) -> float:
    """
    Radius of non-touching solid rods on a lattice of constant a with the requested AFF.

    Raises:
        GeometryDomainError: aff outside the open range (MIN_TOUCHING_AFF, 1)
    """
    if not (MIN_TOUCHING_AFF < aff < 1.0):
        raise GeometryDomainError(
            f"AFF {aff} not reachable with solid rods; need {MIN_TOUCHING_AFF:.5f} < AFF < 1 (R < a/2)"
        )
    if a <= 0.0:
        raise GeometryDomainError("lattice constant must be positive")
    return a * math.sqrt((1.0 - aff) * SQRT3 / (2.0 * math.pi))


def lattice_frame(orientation: Orientation, a: float) -> Tuple[float, float]:
    """(row spacing along propagation, transverse period) for the orientation."""
    if Orientation(orientation) is Orientation.GAMMA_M:
        return 0.5 * SQRT3 * a, a
    return 0.5 * a, SQRT3 * a


def crystal_thickness(spec: CrystalSpec) -> float:
    """Distance between the outer tangent planes of the first and last rows."""
    if spec.layers_N == 0:
        return 0.0
    row_spacing, _ = lattice_frame(spec.orientation, spec.lattice_constant_a)
    return (spec.layers_N - 1) * row_spacing + 2.0 * spec.outer_radius_R


def build_lattice(spec: CrystalSpec) -> List[Tuple[float, float]]:
    """
    Rod centers, one per row per transverse period.

    Row k sits at x = R + k * row_spacing; odd rows are shifted by half a
    period transversely.
    """
    row_spacing, period = lattice_frame(spec.orientation, spec.lattice_constant_a)
    centers = []
    for k in range(spec.layers_N):
        x = spec.outer_radius_R + k * row_spacing
        y = 0.0 if k % 2 == 0 else 0.5 * period
        centers.append((x, y))
    return centers


def _in_dielectric(x: np.ndarray, y: np.ndarray, spec: CrystalSpec,
                   centers: List[Tuple[float, float]], period: float) -> np.ndarray:
    hit = np.zeros(np.broadcast(x, y).shape, dtype=bool)
    R2 = spec.outer_radius_R ** 2
    r2 = spec.inner_radius_r ** 2
    for x0, y0 in centers:
        # minimum image across the periodic transverse boundary
        dy = np.mod(y - y0 + 0.5 * period, period) - 0.5 * period
        rho2 = (x - x0) ** 2 + dy ** 2
        hit |= (rho2 <= R2) & (rho2 >= r2)
    return hit


def rasterize(spec: CrystalSpec, cell_size: float, supersample: int = 4,
              max_cells: Optional[int] = None) -> PermittivityGrid:
    """
    Rasterize the crystal to a permittivity grid.

    Cells are classified by their center; cells within one cell of a rod
    boundary get the area-weighted average from supersample^2 sub-points.
    The cell is snapped so that ny * cell_size closes the transverse period.

    Raises:
        GeometryDomainError: cell too coarse to resolve the rods
        GridBudgetError: grid larger than max_cells (PBG_MAX_GRID_CELLS)
    """
    if spec.layers_N > 0 and spec.outer_radius_R > 0 and cell_size > spec.outer_radius_R / 8.0 * (1 + 1e-9):
        raise GeometryDomainError(
            f"cell_size {cell_size:g} m does not resolve rods of radius {spec.outer_radius_R:g} m (need <= R/8)"
        )
    if supersample < 4:
        raise GeometryDomainError("supersample must be >= 4 (16 points per boundary cell)")
    max_cells = settings.MAX_GRID_CELLS if max_cells is None else max_cells

    _, period = lattice_frame(spec.orientation, spec.lattice_constant_a)
    ny = max(1, math.ceil(period / cell_size - 1e-9))
    h = period / ny
    d = crystal_thickness(spec)
    nx = max(1, math.ceil(d / h - 1e-9))
    if nx * ny > max_cells:
        raise GridBudgetError(f"grid of {nx} x {ny} cells exceeds budget of {max_cells} cells")

    eps_rod = spec.rod_index ** 2
    fill = np.zeros((nx, ny))
    centers = build_lattice(spec)
    if centers and spec.outer_radius_R > 0:
        X, Y = np.meshgrid((np.arange(nx) + 0.5) * h, (np.arange(ny) + 0.5) * h, indexing="ij")
        inside = _in_dielectric(X, Y, spec, centers, period)
        near = np.zeros_like(inside)
        for x0, y0 in centers:
            dy = np.mod(Y - y0 + 0.5 * period, period) - 0.5 * period
            rho = np.hypot(X - x0, dy)
            near |= np.abs(rho - spec.outer_radius_R) < h
            if spec.inner_radius_r > 0:
                near |= np.abs(rho - spec.inner_radius_r) < h
        fill[inside] = 1.0

        idx = np.nonzero(near)
        offsets = ((np.arange(supersample) + 0.5) / supersample - 0.5) * h
        sx = X[idx][:, None, None] + offsets[None, :, None]
        sy = Y[idx][:, None, None] + offsets[None, None, :]
        fill[idx] = _in_dielectric(sx, sy, spec, centers, period).mean(axis=(1, 2))

    logger.debug("rasterized %d layers to %d x %d cells (h=%.4g m)", spec.layers_N, nx, ny, h)
    return PermittivityGrid(
        eps_r=1.0 + fill * (eps_rod - 1.0),
        cell_size=h,
        transverse_period=period,
        thickness=d,
        layers_N=spec.layers_N,
        rod_index=spec.rod_index,
    )


def slab_grid(thickness: float, index: float, cell_size: float,
              transverse_period: Optional[float] = None) -> PermittivityGrid:
    """Homogeneous dielectric sheet; the partially filled exit cell is area-weighted."""
    if thickness <= 0:
        raise GeometryDomainError("slab thickness must be positive")
    if transverse_period is None:
        transverse_period = 4 * cell_size
    ny = max(1, math.ceil(transverse_period / cell_size - 1e-9))
    h = transverse_period / ny
    nx = math.ceil(thickness / h - 1e-9)
    fill = np.clip(thickness / h - np.arange(nx), 0.0, 1.0)
    eps = 1.0 + fill[:, None] * (index ** 2 - 1.0) * np.ones((1, ny))
    return PermittivityGrid(
        eps_r=eps,
        cell_size=h,
        transverse_period=transverse_period,
        thickness=thickness,
        layers_N=1,
        rod_index=index,
    )


def dielectric_fraction(grid: PermittivityGrid, spec: CrystalSpec) -> float:
    """Grid-integrated dielectric area over N unit cells; compare with 1 - AFF."""
    if spec.layers_N == 0 or spec.rod_index == 1.0:
        return 0.0
    fill = (grid.eps_r - 1.0) / (spec.rod_index ** 2 - 1.0)
    area = fill.sum() * grid.cell_size ** 2
    return float(area / (spec.layers_N * unit_cell_area(spec.lattice_constant_a)))
