"""Exception types shared across the package."""


class ContractViolationError(ValueError):
    """An argument broke a documented shape/width/finiteness contract."""


class ConfigurationError(ValueError):
    """A configuration value is invalid (unknown env, body, mask, ...)."""


class EmptyWindowError(ValueError):
    """A metric was requested over an empty set of qualifying records."""


class RemoteEnvError(RuntimeError):
    """Base class for remote-environment client failures."""


class RemoteConnectionError(RemoteEnvError):
    """The environment server could not be reached."""


class RemoteProtocolError(RemoteEnvError):
    """The server sent something that is not a valid protocol reply."""


class RemoteCommandError(RemoteEnvError):
    """The server understood the request but reported an error."""


class SpecMismatchError(RemoteEnvError):
    """The server's observation spec is inconsistent with expectations."""
