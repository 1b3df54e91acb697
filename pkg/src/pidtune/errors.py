class ConfigError(ValueError):
    """Raised for invalid configuration: bad dimensions, violated invariants, unknown keys."""


class SimulationFault(RuntimeError):
    """Raised when a simulation cannot produce a usable trace."""
