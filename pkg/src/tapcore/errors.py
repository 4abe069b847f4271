"""Exception types shared across the engine."""


class ContractViolation(ValueError):
    """An operation was called with arguments that break its preconditions."""


class FootprintRangeError(ContractViolation):
    """A height-map footprint falls outside the grid."""


class HeightOverflowError(ContractViolation):
    """A placement would exceed the container height."""


class SceneGenerationError(RuntimeError):
    """A box could not be placed after the retry budget was exhausted."""


class SessionError(RuntimeError):
    """A packing session was driven into an illegal transition."""


class InvalidActionError(RuntimeError):
    """A policy emitted an action outside the validity mask."""


class ProtocolError(RuntimeError):
    """A remote peer violated the episode wire protocol."""


class ReplayError(RuntimeError):
    """A recorded trajectory diverged during re-execution."""
