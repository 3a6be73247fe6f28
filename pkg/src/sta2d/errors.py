"""Exception types shared across the package."""


class StaError(Exception):
    """Base class for all package-specific errors."""


class AnsatzError(StaError):
    """Constraint system is inconsistent, singular, or otherwise unsolvable."""


class DesignError(StaError):
    """A designed protocol is invalid (e.g. a reference trajectory crosses zero)."""


class ReconstructionError(StaError):
    """Frequency reconstruction from imaginary reference parts is singular."""


class ShootingError(StaError):
    """The shooting optimizer failed to meet the final boundary conditions."""


class SimulationError(StaError):
    """A propagation engine failed (step-size underflow, norm drift, ...)."""


class StateError(StaError):
    """An initial state is inconsistent with the schedule boundary."""


class ConfigError(StaError):
    """A CLI configuration document is invalid."""
