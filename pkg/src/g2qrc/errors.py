"""Exception types shared across the package."""


class G2qrcError(Exception):
    """Base class for all package-specific errors."""


class SpaceMismatchError(G2qrcError):
    """Operands live on different Hilbert spaces."""


class VacuumStateError(G2qrcError):
    """Occupation too small for a well-defined g2(0)."""


class TruncationLeakError(G2qrcError):
    """Population leaked into the highest Fock levels beyond tolerance."""


class AnnihilatedStateError(G2qrcError):
    """Applying an operator left (numerically) zero trace."""


class SteadyStateError(G2qrcError):
    """Steady-state solve failed or is not unique."""


class IntegrationError(G2qrcError):
    """Adaptive integration failed (step underflow or invariant violation)."""
