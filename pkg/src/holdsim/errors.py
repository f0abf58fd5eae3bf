"""Exception types shared across the package."""


class HoldsimError(Exception):
    """Base class for all package errors."""


class SchemaError(HoldsimError):
    """A serialized object has unknown fields or malformed values."""


class CalibrationOverflow(HoldsimError):
    """calibration_scale pushed some arrival probability above 1."""


class EmptyScenario(HoldsimError):
    """Scenario generation pruned every title."""


class StateSpaceTooLarge(HoldsimError):
    """Exact oracle instance exceeds the state-space guard."""


class ZeroBaseline(HoldsimError):
    """A baseline denominator is zero; the scenario is degenerate."""


class ConfigError(HoldsimError):
    """A run is missing required policy attachments or has bad settings."""


class MissingBaseline(HoldsimError):
    """An operation requires frozen baselines that were not provided."""
