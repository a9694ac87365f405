"""Exception hierarchy shared by the library and the command line runner."""


class TachyonLabError(Exception):
    """Base class for every error raised by tachyon_lab."""

    exit_code = 1


class ConfigError(TachyonLabError, ValueError):
    """Invalid parameters, missing configuration keys or malformed input."""

    exit_code = 2


class LatticeMismatchError(TachyonLabError, ValueError):
    """Array lengths do not agree with the lattice they are used with."""

    exit_code = 2


class SymmetryError(TachyonLabError, ValueError):
    """A spectrum that must be conjugate-symmetric is not."""

    exit_code = 2


class PhysicsGuardError(TachyonLabError):
    """A numerical guard protecting the physics tripped."""

    exit_code = 3


class InstabilityOverflowError(PhysicsGuardError, OverflowError):
    """Exponential growth of an unstable mode left the representable range."""


class DomainMarginError(PhysicsGuardError):
    """The periodic lattice is too small for the requested horizon."""


class WraparoundError(PhysicsGuardError):
    """The light cone of the initial data reaches the lattice edge."""


class FitError(TachyonLabError, ValueError):
    """A least-squares fit could not be performed or is ill-posed."""

    exit_code = 3


class NoCarrierError(TachyonLabError, ValueError):
    """No oscillating carrier above the noise floor inside the window."""

    exit_code = 3


class CovarianceMismatchError(TachyonLabError, ValueError):
    """Two Gaussian states do not share covariances or times."""

    exit_code = 3


class AcceptanceError(TachyonLabError, AssertionError):
    """A scenario acceptance check failed in ``--check`` mode."""

    exit_code = 4


class DegenerateStateError(TachyonLabError, ValueError):
    """A diagnostic is undefined for the given (for example all-zero) state."""

    exit_code = 3
