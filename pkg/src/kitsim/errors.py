"""Exception hierarchy."""


class KitsimError(Exception):
    """Base class for all toolkit errors."""


class DomainError(KitsimError, ValueError):
    """An input lies outside the validity domain of a model."""


class PoleError(DomainError):
    """Evaluation at (or numerically on top of) a network pole."""


class FitError(KitsimError, RuntimeError):
    """A fit failed, did not converge, or was under-determined."""


class NoRegionError(KitsimError, ValueError):
    """A searched-for spectral region (bandgap, crossing, bandwidth) is absent."""


class TraceFormatError(KitsimError, ValueError):
    """A measurement trace file could not be parsed."""


class ConfigError(KitsimError, ValueError):
    """A project configuration file failed validation."""
