"""Exception types shared across the package."""


class ApiForgeError(Exception):
    """Base class for all errors raised by this package."""


class MalformedDocument(ApiForgeError):
    """The API description could not be parsed at all."""


class MissingPaths(ApiForgeError):
    """The API description parsed but declares no paths."""


class TargetUnreachable(ApiForgeError):
    """The target API could not be reached (transport-level failure)."""


class ConfigError(ApiForgeError):
    """Invalid configuration (bad base URL, contradictory flags, ...)."""


class EmptyCorpus(ApiForgeError):
    """Tokenizer training got an empty corpus."""


class CorpusTooSmall(ApiForgeError):
    """Pretraining needs a minimum corpus size."""


class NonFiniteLoss(ApiForgeError):
    """Training produced NaN or infinite loss."""


class MissingOracle(ApiForgeError):
    """A coverage-based reward was requested without a coverage oracle."""


class BufferTooSmall(ApiForgeError):
    """Replay buffer holds fewer transitions than the requested batch."""


class PortInUse(ApiForgeError):
    """The lab server port is already bound."""


class CheckpointIncompatible(ApiForgeError):
    """Checkpoint file has a different format version or shape."""


class CheckpointWriteFailure(ApiForgeError):
    """Checkpoint could not be written to disk."""


class IoFailure(ApiForgeError):
    """Report or pool file could not be written."""
