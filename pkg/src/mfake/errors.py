"""Exception types shared across the package."""


class MfakeError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(MfakeError, ValueError):
    """Invalid argument: bad dimensions, out-of-range values, unusable inputs."""


class DecodeError(MfakeError, ValueError):
    """Malformed serialized data (wire messages, stored records)."""


class ProtocolStateError(MfakeError, RuntimeError):
    """A session operation was invoked in the wrong phase."""


class StorageError(MfakeError, OSError):
    """Persistence failure for file-backed state."""
