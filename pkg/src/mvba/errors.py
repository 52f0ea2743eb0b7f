"""Exception hierarchy shared by every module."""


class MVBAError(Exception):
    pass


class ConfigError(MVBAError, ValueError):
    """Parameters that cannot describe a valid run (unsupported k, n <= 3t, ...)."""


class ContractViolation(MVBAError, ValueError):
    """An operation was called with arguments outside its precondition."""


class PreconditionError(ContractViolation):
    pass


class SourceFaulty(MVBAError):
    """The source was identified as faulty; peers fall back to the default value."""


class InvariantViolation(MVBAError, AssertionError):
    """An internal invariant broke. Always a bug, never a protocol state."""


class HarnessError(MVBAError, RuntimeError):
    """The simulator was driven incorrectly (e.g. a message from an isolated node)."""
