"""
Error categories shared by the library and the CLI.

Each category carries the process exit code the CLI uses for it.
"""


class AnnealSchedError(Exception):
    """Base class for all expected failures."""

    exit_code = 1
    category = "Error"


class UsageError(AnnealSchedError):
    exit_code = 2
    category = "Usage"


class ArgumentError(AnnealSchedError, ValueError):
    """Invalid argument passed to a library operation."""

    exit_code = 2
    category = "Argument"


class ConfigurationError(AnnealSchedError, ValueError):
    exit_code = 3
    category = "Configuration"


class CapacityError(AnnealSchedError):
    """Problem is too large for the requested solver or device."""

    exit_code = 4
    category = "Capacity"


class CalibrationError(AnnealSchedError):
    """Calibration failed; `diagnostics` holds whatever was measured before failing."""

    exit_code = 5
    category = "Calibration"

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
