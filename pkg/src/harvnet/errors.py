"""Exception hierarchy shared by the pipeline modules."""


class HarvnetError(Exception):
    """Base class for pipeline errors."""


class EventFormatError(HarvnetError):
    """Too many malformed lines in an event log."""

    def __init__(self, message, offenders=()):
        super().__init__(message)
        self.offenders = list(offenders)


class EmptyWindowError(HarvnetError):
    """No events fall inside the requested month."""


class ReportError(HarvnetError):
    pass


class ConfigError(HarvnetError):
    """Invalid configuration value (bad keyword list, bin width, scenario...)."""


class MatrixError(HarvnetError):
    pass


class EigensolverError(HarvnetError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class DegeneratePartitionError(HarvnetError):
    """Discretization kept producing empty clusters."""
