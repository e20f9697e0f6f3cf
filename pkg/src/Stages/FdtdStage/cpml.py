"""
Convolutional perfectly matched layer (CPML) along the propagation axis.

Graded profiles sigma(x), kappa(x) and alpha(x) rise from the interior edge
of the layer to the outer wall. The recursive convolution

    psi <- b * psi + c * dF
    dF_stretched = dF / kappa + psi

replaces every x-difference inside the layer. Fields are stored in
normalized units (H scaled by the vacuum impedance), which makes the
electric and magnetic coefficient formulas identical.
"""
from dataclasses import dataclass

import numpy as np

EPS0 = 8.8541878128e-12
ETA0 = 376.730313668

GRADING_ORDER = 3
KAPPA_MAX = 3.0
ALPHA_MAX = 0.05  # S/m, complex-frequency shift at the interior edge


@dataclass(frozen=True)
class CpmlCoefficients:
    """Per-position coefficients, shaped (n, 1) to broadcast over the transverse axis."""
    b: np.ndarray
    c: np.ndarray
    inv_kappa: np.ndarray


def sigma_max(cell_size: float) -> float:
    return 0.8 * (GRADING_ORDER + 1) / (ETA0 * cell_size)


def layer_depth(positions: np.ndarray, extent: float, thickness: int) -> np.ndarray:
    """Normalized depth into the layer (0 at the interior edge, 1 at the wall at 0 or extent)."""
    front = (thickness - positions) / thickness
    back = (positions - (extent - thickness)) / thickness
    return np.clip(np.maximum(front, back), 0.0, 1.0)


def axis_coefficients(positions: np.ndarray, extent: float, thickness: int,
                      cell_size: float, dt: float) -> CpmlCoefficients:
    """
    Coefficients at the given x positions (in cells).

    Args:
        positions: x coordinates in units of cells
        extent: x coordinate of the outer wall, in cells
        thickness: layer thickness in cells at each end
        cell_size: grid spacing (m)
        dt: time step (s)
    """
    rho = layer_depth(np.asarray(positions, dtype=float), extent, thickness)
    graded = rho ** GRADING_ORDER
    sigma = sigma_max(cell_size) * graded
    kappa = 1.0 + (KAPPA_MAX - 1.0) * graded
    alpha = np.where(rho > 0.0, ALPHA_MAX * (1.0 - rho), 0.0)

    b = np.exp(-(sigma / kappa + alpha) * dt / EPS0)
    denom = sigma * kappa + kappa ** 2 * alpha
    c = np.where(sigma > 0.0, sigma * (b - 1.0) / np.where(denom > 0.0, denom, 1.0), 0.0)
    return CpmlCoefficients(b=b[:, None], c=c[:, None], inv_kappa=(1.0 / kappa)[:, None])
