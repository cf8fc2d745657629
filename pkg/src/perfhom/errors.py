"""Exception hierarchy shared by all modules."""


class PerfhomError(Exception):
    """Base class for every error raised by the package."""


class DomainError(PerfhomError, ValueError):
    """An argument lies outside the mathematical domain of a formula."""


class DegenerateRatioError(DomainError):
    """``a_eps == eps`` in two dimensions, where ``|log(a/eps)|`` vanishes."""


class ConfigError(PerfhomError, ValueError):
    """A configuration violates one of its structural invariants."""


class ResolutionError(PerfhomError):
    """The holes are too small for the grid to resolve them."""


class GridMismatchError(PerfhomError, ValueError):
    """Fields or configurations live on incompatible grids."""


class SizeError(PerfhomError, ValueError):
    """Grid size is not a product of small primes."""


class RangeError(PerfhomError, ValueError):
    """Right-hand side is not in the range of a singular operator."""


class NonConvergence(PerfhomError, RuntimeError):
    """An iterative method hit its iteration cap."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class AmbiguousRegime(PerfhomError):
    """The probe trend of sigma_eps is neither monotone nor constant."""


class SourceInvalid(PerfhomError, ValueError):
    """A source field fails the validity conditions of its regime."""


class DiscrepancyError(PerfhomError):
    """Two formulas for the same quantity disagree beyond tolerance."""


class ZeroModeError(PerfhomError, ValueError):
    """A torus problem is incompatible at the zero Fourier mode."""


class LocalSolveFailure(PerfhomError, RuntimeError):
    """A per-hole restriction solve failed."""

    def __init__(self, message, hole_index=None):
        super().__init__(message)
        self.hole_index = hole_index


class InsufficientLadder(PerfhomError, ValueError):
    """Fewer ladder points than a scaling fit needs."""


class NonDecreasingError(PerfhomError):
    """A ladder error sequence failed to decrease strictly."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
