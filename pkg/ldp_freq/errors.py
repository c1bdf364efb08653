class LdpError(ValueError):
    """Base class for every error raised by ldp_freq."""


class NonPrimeModulus(LdpError):
    pass


class ModulusTooLarge(LdpError):
    pass


class ZeroInverse(LdpError, ZeroDivisionError):
    pass


class IndexOutOfRange(LdpError):
    pass


class NotCanonical(LdpError):
    pass


class ZeroVector(LdpError):
    pass


class InputOutOfRange(LdpError):
    pass


class InputNotStarCanonical(LdpError):
    pass


class UniverseMismatch(LdpError):
    pass


class BlockMismatch(LdpError):
    pass


class TooLargeForExactMode(LdpError):
    pass


class DegenerateIntersection(LdpError):
    pass


class ParameterError(LdpError):
    """Raised when no usable mechanism parameters exist for a request."""


class ParameterOverflow(ParameterError):
    pass


class NoFeasibleParams(ParameterError):
    pass


class InvalidConfig(LdpError):
    pass


class MalformedMessage(LdpError):
    pass
