"""Exception hierarchy shared by all PBGLab stages."""
from typing import List, Optional


class PbgError(Exception):
    """Base class for every error raised by PBGLab."""


class GeometryDomainError(PbgError, ValueError):
    """Requested geometry cannot be realized (e.g. AFF below the touching-rod minimum)."""


class GridBudgetError(PbgError, MemoryError):
    """A grid would exceed the configured cell budget."""


class NumericalInstabilityError(PbgError, ArithmeticError):
    """Field values blew up or became non-finite during time stepping."""


class SourceBandwidthError(PbgError, ValueError):
    """The sweep band is not covered by the source spectrum."""


class SpectrumMismatchError(PbgError, ValueError):
    """Two spectra cannot be combined (different grids, vanishing reference)."""


class AnalysisError(PbgError, ValueError):
    """Invalid input to an analysis operation."""


class CampaignError(PbgError):
    """Campaign layout or manifest problem."""


class ParseError(PbgError, ValueError):
    """Malformed file content. Carries the 1-based line number when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(PbgError, ValueError):
    """Run configuration rejected. `failures` lists every problem found."""

    def __init__(self, failures: List[str]):
        self.failures = list(failures)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.failures))
