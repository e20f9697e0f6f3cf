"""Gaussian-modulated sinusoid driving the soft line source."""
import math
from dataclasses import dataclass
from typing import Tuple

# Spectral level that defines the source bandwidth edges
BANDWIDTH_LEVEL_DB = -20.0


@dataclass(frozen=True)
class GaussianPulse:
    """
    s(t) = A * exp(-((t - t0) / tau)^2) * sin(2 pi f0 (t - t0))

    `bandwidth` is the full width of the spectrum at -20 dB, so the spectral
    amplitude exp(-(pi tau (f - f0))^2) equals 0.1 at f0 +/- bandwidth / 2.
    """
    center_freq: float
    bandwidth: float
    amplitude: float = 1.0

    @property
    def tau(self) -> float:
        half = 0.5 * self.bandwidth
        return math.sqrt(-BANDWIDTH_LEVEL_DB / 20.0 * math.log(10.0)) / (math.pi * half)

    @property
    def delay(self) -> float:
        return 5.0 * self.tau

    @property
    def duration(self) -> float:
        """Time after which the pulse is below exp(-25) of its peak."""
        return 2.0 * self.delay

    def band(self) -> Tuple[float, float]:
        return self.center_freq - 0.5 * self.bandwidth, self.center_freq + 0.5 * self.bandwidth

    def covers(self, f_low: float, f_high: float) -> bool:
        lo, hi = self.band()
        return lo <= f_low and f_high <= hi

    def __call__(self, t: float) -> float:
        u = t - self.delay
        return self.amplitude * math.exp(-(u / self.tau) ** 2) * math.sin(2.0 * math.pi * self.center_freq * u)
