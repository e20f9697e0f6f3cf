"""
Closed-form and sampling oracles that share no code with the package.
"""
import math

import numpy as np

C = 299_792_458.0


def slab_transmission(freqs, index: float, thickness: float) -> np.ndarray:
    """
    Normal-incidence transmission of a lossless slab relative to the same
    thickness of vacuum, exp(-iwt) convention.
    """
    k0 = 2.0 * np.pi * np.asarray(freqs, dtype=float) / C
    r = (1.0 - index) / (1.0 + index)
    delta = k0 * index * thickness
    t = (1.0 - r * r) * np.exp(1j * delta) / (1.0 - r * r * np.exp(2j * delta))
    return t * np.exp(-1j * k0 * thickness)


def monte_carlo_aff(outer: float, inner: float, a: float, samples: int = 200_000, seed: int = 0) -> float:
    """Air fraction of a triangular-lattice unit cell with annular rods, by uniform sampling."""
    rng = np.random.default_rng(seed)
    u, v = rng.random(samples), rng.random(samples)
    x = u * a + v * 0.5 * a
    y = v * math.sqrt(3.0) / 2.0 * a
    solid = np.zeros(samples, dtype=bool)
    for i in range(-1, 3):
        for j in range(-1, 3):
            cx = i * a + j * 0.5 * a
            cy = j * math.sqrt(3.0) / 2.0 * a
            rho2 = (x - cx) ** 2 + (y - cy) ** 2
            solid |= (rho2 <= outer ** 2) & (rho2 >= inner ** 2)
    return 1.0 - solid.mean()


def lorentz_index(freqs, f0: float, linewidth: float, strength: float):
    """
    Real index of a single Lorentz resonance and its exact group index.

    n = 1 + A x / (x^2 + g^2 w^2), x = w0^2 - w^2
    """
    w = 2.0 * np.pi * np.asarray(freqs, dtype=float)
    w0, g = 2.0 * np.pi * f0, 2.0 * np.pi * linewidth
    x = w0 ** 2 - w ** 2
    D = x ** 2 + g ** 2 * w ** 2
    n = 1.0 + strength * x / D
    dx = -2.0 * w
    dD = 2.0 * x * dx + 2.0 * g ** 2 * w
    dn = strength * (dx * D - x * dD) / D ** 2
    return n, n + w * dn
