"""Exception hierarchy.

Every error raised on purpose by the library derives from :class:`RecurLabError`
(itself a ``ValueError``), so the CLI can map them onto exit code 2.
"""


class RecurLabError(ValueError):
    pass


class InvalidSpec(RecurLabError):
    pass


class NonMonotoneSchedule(RecurLabError):
    pass


class InvalidCount(RecurLabError):
    pass


class UnsupportedFamily(RecurLabError):
    pass


class NotPositiveDefinite(RecurLabError):
    pass


class OffLattice(RecurLabError):
    pass


class WrongDimension(RecurLabError):
    pass


class LengthMismatch(RecurLabError):
    pass


class OutOfRange(RecurLabError):
    pass


class ParityViolation(RecurLabError):
    pass


class DomainViolation(RecurLabError):
    """An asymptotic formula was queried outside its stated validity range."""


class IncompatibleTarget(RecurLabError):
    pass


class InsufficientReplicas(RecurLabError):
    pass


class InsufficientData(RecurLabError):
    pass


class ConfigError(RecurLabError):
    """Config file problem; ``where`` names the offending section/field."""

    def __init__(self, message, where=None):
        self.where = where
        super().__init__(f"[{where}] {message}" if where else message)


class InconsistentGrid(RecurLabError):
    """Aggregates compared by a rate check do not share targets or eps grid."""
