"""Exception types raised across the package."""


class HetDDFError(Exception):
    """Base class for all package errors."""


class DimensionError(HetDDFError, ValueError):
    """Dimension keys do not line up (missing, duplicated or not a subset)."""


class NotPositiveDefiniteError(HetDDFError, ValueError):
    """A covariance or noise matrix that must be SPD is not."""


class ImproperDensityError(HetDDFError, ValueError):
    """Moment form was requested from an information matrix that is not PD."""


class UnobservableEliminationError(HetDDFError, ValueError):
    """The block of dimensions being eliminated is singular."""


class GraphError(HetDDFError, ValueError):
    """Bad factor-graph mutation (duplicate variable, unknown scope, ...)."""


class ChannelError(HetDDFError, ValueError):
    """Channel filter misuse: unknown sender, missing channel, overlap."""


class ConfigError(HetDDFError, ValueError):
    """Scenario or topology configuration is malformed or invalid."""


class StepError(HetDDFError, RuntimeError):
    """Lock-step discipline violated, or a step failed with context."""
