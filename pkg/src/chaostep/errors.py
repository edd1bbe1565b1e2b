"""Exception types shared across the package."""


class ChaostepError(Exception):
    """Base class for all package-specific errors."""


class DegenerateMoments(ChaostepError):
    """Moment matrix of the increment law is numerically singular."""


class CountExceedsSupport(ChaostepError):
    """More orthonormal functions requested than the support can carry."""


class ResolutionExceeded(ChaostepError):
    """Dyadic resolution beyond what double precision can represent."""


class TruncationTooSmall(ChaostepError):
    """Chaos truncation below the minimum of 2."""


class DimensionMismatch(ChaostepError):
    """Inconsistent dimensions between laws, bases, field and state."""


class OverlappingIndices(ChaostepError):
    """Correction indices collide with the drivers or the constant."""


class NonFiniteState(ChaostepError):
    """A simulated state left the finite floats (coefficient blow-up)."""


class ExplosionGuard(ChaostepError):
    """Exhaustive path enumeration would exceed the outcome budget."""


class NodeBudgetExceeded(ChaostepError):
    """Reachable lattice grew past the node budget.

    Coarsening the state rounding (fewer significant digits) merges nearby
    nodes and usually brings the count back under budget.
    """


class UnsupportedTestFunction(ChaostepError):
    """Consistency checks accept polynomial test functions only."""


class GridMismatch(ChaostepError):
    """Coarse and fine grids do not nest (N must divide N_fine)."""


class NoiseDominated(ChaostepError):
    """Monte-Carlo noise exceeds the budget; slope fit would be meaningless."""


class DegenerateFit(ChaostepError):
    """All errors at machine level: no slope can be fitted."""


class ConfigError(ChaostepError):
    """Rejected CLI/run configuration; message names the offending key."""
