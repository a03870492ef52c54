"""Exception hierarchy shared across mapvec modules."""


class MapvecError(Exception):
    """Base class for all mapvec errors."""


class FormatError(MapvecError):
    """A file or record does not follow its documented format."""


class IntegrityError(MapvecError):
    """Data violates an invariant (dangling references, bad geometry, ...)."""


class UsageError(MapvecError):
    """An operation was called with arguments that violate its contract."""


class ConfigError(MapvecError):
    """A configuration document is malformed or internally inconsistent."""


class ResourceError(MapvecError):
    """A resource constraint cannot be satisfied (e.g. minimum batch size)."""


class LeakageError(UsageError):
    """A downstream label was found among the encoder's input features."""
