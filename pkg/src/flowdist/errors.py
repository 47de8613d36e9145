"""Exception taxonomy shared by all modules.

Every error raised by the library derives from FlowdistError so the CLI
can map any computational failure to a single exit code.
"""


class FlowdistError(Exception):
    """Base class for all library errors."""


class OutOfDomain(FlowdistError):
    """A query point lies outside the declared space-time box."""


class NonFinite(FlowdistError):
    """A sampled field or function contains NaN/inf at needed cells."""


class NoModulus(FlowdistError):
    """Even the smallest lattice spacing violates the oscillation bound."""


class StepTooLarge(FlowdistError):
    """Integrator residual exceeded 10x the ODE tolerance."""


class SparseFamily(FlowdistError):
    """Curve family density proxy exceeds the configured cap."""


class EmptySubset(FlowdistError):
    """A tube was requested over an empty parameter subset."""


class ProfileMismatch(FlowdistError):
    """Declared direction profile disagrees with the best-fitting signs."""


class GraphTooLarge(FlowdistError):
    """Lattice graph would exceed the configured node cap."""


class Unreachable(FlowdistError):
    """Shortest-path target cannot be reached (disconnected graph)."""


class DegeneratePair(FlowdistError):
    """Two points at distance zero carry different function values."""

    def __init__(self, msg, pair=None):
        super().__init__(msg)
        self.pair = pair
        # convention: the Lipschitz constant of such data is +inf
        self.sentinel = float("inf")


class ScheduleTooShort(FlowdistError):
    """Neither the Cauchy nor the divergence criterion triggered."""


class NeedSmallerLambda(FlowdistError):
    """No scheduled weight meets the requested Lipschitz threshold."""


class EmptyDomain(FlowdistError):
    """An extension was requested from an empty source set."""


class EmptyRadii(FlowdistError):
    """Maximal function requested with an empty radii ladder."""


class FlowLeftDomain(FlowdistError):
    """A characteristic left the spatial box before the final time."""


class DifferentStart(FlowdistError):
    """Separation bound requires both curves to share the start point."""


class CFLViolation(FlowdistError):
    """Explicit time step exceeds the stability bound h/(2*vnorm)."""


class SupportLeak(FlowdistError):
    """A test bump's support touches the domain boundary."""


class LatticeMismatch(FlowdistError):
    """Two gridded objects do not share lattice/time slices."""


class ConfigInvalid(FlowdistError):
    """Run configuration failed validation (CLI exit code 2)."""


class ComputationFailed(FlowdistError):
    """Wrapper for failures during a CLI run (exit code 1)."""
