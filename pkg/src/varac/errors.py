"""Exception hierarchy shared by every varac module."""


class VaracError(Exception):
    """Base class for all errors raised by varac."""


class NonUnichain(VaracError):
    """The policy-induced chain has more than one recurrent class."""


class SingularSolve(VaracError):
    """The Poisson system for differential values is rank deficient."""


class DimensionMismatch(VaracError, ValueError):
    pass


class IndexOutOfRange(VaracError, IndexError):
    pass


class NonFiniteEnergy(VaracError, FloatingPointError):
    pass


class SupportViolation(VaracError, ValueError):
    """KL(p || q) is infinite because q vanishes where p does not."""


class DivisionBySupportZero(VaracError, ZeroDivisionError):
    pass


class MdpFormatError(VaracError, ValueError):
    """Raised by the MDP JSON loader; the message names the offending field."""


class SpecInvalid(VaracError, ValueError):
    pass


class ConfigError(VaracError, ValueError):
    """Bad run configuration; the message names the offending key."""


class InvariantViolation(VaracError, AssertionError):
    """A debug-mode invariant check failed."""
