class DeadlockError(RuntimeError):
    """No rank can make progress although operations remain."""


class InvariantViolation(AssertionError):
    """A scheduling or dependency invariant was broken."""


class MatchError(RuntimeError):
    """A receive could not be matched to exactly one send."""


class OracleMismatch(AssertionError):
    """Distributed results differ from the sequential evaluation."""
