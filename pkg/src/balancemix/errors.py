"""Exception types shared across the package."""


class BalanceMixError(Exception):
    """Base class for all package errors."""


class ConfigError(BalanceMixError, ValueError):
    """Invalid or infeasible configuration value."""


class ContractError(BalanceMixError, ValueError):
    """An operation was called with inputs that violate its contract."""


class ShapeError(ContractError):
    """Array dimensions do not match what the operation expects."""


class ArtifactError(BalanceMixError, OSError):
    """A file on disk is missing, truncated or not in the expected format."""
