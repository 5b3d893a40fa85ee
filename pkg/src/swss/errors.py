"""Exception hierarchy.

Every error raised by the library derives from :class:`SwssError`.  The CLI
maps the two broad families to exit codes: :class:`ModelError` (the network
or its parameters are invalid) and :class:`SpecParseError` (the input file
could not be read).
"""


class SwssError(Exception):
    pass


class SpecParseError(SwssError):
    pass


class ModelError(SwssError):
    pass


class NotATree(ModelError):
    pass


class NonPositiveParameter(ModelError):
    pass


class EdgeRateMissing(ModelError):
    pass


class NotCriticallyLoaded(ModelError):
    pass


class CRPViolated(ModelError):
    pass


class InvalidP(ModelError):
    pass


class SamePool(ModelError):
    pass


class SingularSystem(ModelError):
    pass


class BalanceViolated(ModelError):
    pass


class AnchorNotEdge(ModelError):
    pass


class NotASimplexPoint(ModelError):
    pass


class NotTransientRegime(ModelError):
    pass


class NotStabilizable(ModelError):
    pass


class MarginNonPositive(SwssError):
    """A transience margin came out non-positive; contradicts theory, so a bug."""


class NotFound(SwssError):
    pass


class InequalityFailed(SwssError):
    def __init__(self, message, worst_point=None):
        super().__init__(message)
        self.worst_point = worst_point


class NTooSmall(ModelError):
    pass


class ModeMismatch(SwssError):
    pass


class EmptyTrajectory(SwssError):
    pass


class NonFiniteState(SwssError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
