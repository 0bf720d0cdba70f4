"""Exception hierarchy shared by all modules."""


class ConcboundError(Exception):
    """Base class for every error raised by this package."""


# expression layer
class SpecSyntaxError(ConcboundError):
    """Text does not conform to the expected grammar."""


class NonLinear(ConcboundError):
    """Expression leaves the {1, n, ln n, n ln n} basis (e.g. n*n)."""


class DomainError(ConcboundError):
    pass


class EmptyExpr(ConcboundError):
    pass


class NonPositiveLeadingCoefficient(ConcboundError):
    pass


class ZeroExpr(ConcboundError):
    pass


# recurrence model
class InvariantViolation(ConcboundError):
    pass


class TooLarge(ConcboundError):
    pass


class RuntimeCapExceeded(ConcboundError):
    pass


class TerminalState(ConcboundError):
    pass


# recurrence synthesis
class UnsupportedShape(ConcboundError):
    pass


class NotReducible(ConcboundError):
    pass


class TrivialBound(ConcboundError):
    pass


class KappaBelowF(ConcboundError):
    pass


# loops
class BadDistribution(ConcboundError):
    pass


class NonIncremental(ConcboundError):
    pass


class NoBranchCovers(ConcboundError):
    pass


class CapExceeded(ConcboundError):
    pass


class Infeasible(ConcboundError):
    pass


class ResidualCheckFailed(ConcboundError):
    pass


# oracle
class UnknownReference(ConcboundError):
    pass
