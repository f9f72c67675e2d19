"""Exception hierarchy shared across the package."""


class PoolnetError(Exception):
    """Base class for all package-specific failures."""


class EncodingError(PoolnetError):
    """A state cannot be packed into / unpacked from its feature vector."""


class StateError(PoolnetError):
    """An operation was applied to a vehicle state that cannot accept it."""


class ContractError(PoolnetError):
    """A caller violated an operation's precondition."""


class RoutingError(PoolnetError):
    """A route could not be planned (e.g. unreachable leg)."""


class TimetableError(PoolnetError):
    """A timetable is internally inconsistent or fails to parse."""


class TransitQueryError(PoolnetError):
    """A transit query referenced an unknown station."""


class SimulationError(PoolnetError):
    """The simulated world reached an inconsistent state."""


class CheckpointError(PoolnetError):
    """A network checkpoint is missing, corrupt, or of the wrong version."""


class ConfigError(PoolnetError):
    """A run configuration failed validation."""
