"""
Exceptions raised by hadrl.  Everything derives from HadrlError so callers (the
CLI in particular) can catch library failures in one place.
"""


class HadrlError(Exception):
    pass


class InvalidArgumentError(HadrlError, ValueError):
    pass


class ConfigurationError(HadrlError, ValueError):
    """A scenario or run configuration violates one of its invariants."""


class ContractError(HadrlError, RuntimeError):
    """An operation was called in a state that does not allow it."""


class NumericFailureError(HadrlError, ArithmeticError):
    pass


class ResourceError(HadrlError, RuntimeError):
    pass


class UnreachableFlagError(HadrlError):
    """No sequence of actions captures every flag."""


class BufferNotReadyError(HadrlError):
    """The replay buffer holds fewer transitions than requested."""


class CheckpointError(HadrlError, ValueError):
    pass
