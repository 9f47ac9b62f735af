"""Exception types shared across the package."""


class HarvseedError(Exception):
    """Base class for all errors raised by this package."""


class NonPositiveDiscount(HarvseedError):
    """The discount rate must be strictly positive."""


class InvalidCoefficient(HarvseedError):
    """A model or bound coefficient is out of range; names the field."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class NonConstantPrice(HarvseedError):
    """An operation that assumes constant unit prices got a state-dependent one."""


class DimensionTooLarge(HarvseedError):
    """The requested grid would exceed the node-count cap."""


class NegativeProbability(HarvseedError):
    """A transition stencil produced a negative probability (dominance violated)."""


class NeighborOutOfGrid(HarvseedError):
    """Internal error: a stencil target left the grid where the forced
    boundary action should have applied instead."""


class JumpOutOfGrid(HarvseedError):
    """A jump action would move the state outside the grid."""


class NotConverged(HarvseedError):
    """The value iteration hit the iteration cap before reaching tolerance."""


class AssumptionViolation(HarvseedError):
    """A structural model assumption fails on the grid; solving aborts."""


class ConfigParseError(HarvseedError):
    """A run configuration file is malformed; names the section/key."""


class GridMismatch(HarvseedError):
    """A solution file or sample state does not match the configured grid."""


class NonFiniteState(HarvseedError):
    """A simulated path left the finite range (model blow-up under Euler)."""

    def __init__(self, time: float, message: str = ""):
        self.time = time
        super().__init__(message or f"non-finite state at t={time:.6g}")
