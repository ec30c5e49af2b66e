"""Exception hierarchy shared by all giscsim modules.

The CLI maps these onto process exit codes: configuration problems exit
with 2, data-pairing problems with 3, numeric failures with 4.
"""


class GiscError(Exception):
    """Base class for all giscsim errors."""


class InvalidParameterError(GiscError, ValueError):
    """An argument is outside its documented domain."""


class ConfigError(GiscError):
    """Experiment configuration is missing, malformed, or inconsistent."""


class CapacityError(ConfigError):
    """A requested allocation exceeds the configured memory budget."""


class ShapeError(GiscError, ValueError):
    """Array dimensions do not match the operation's contract."""


class FormatError(GiscError):
    """A file failed structural validation. Carries the byte offset."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class PairingError(GiscError):
    """Two artifacts that must belong to the same run do not match."""


class MemoryEffectError(GiscError):
    """A source offset pushes the shifted pattern off the detector."""


class DegenerateCalibrationError(GiscError):
    """Calibration data cannot support the requested reconstruction."""


class StepSizeError(GiscError):
    """An iterative solver diverged; the step size is too large."""


class NumericError(GiscError):
    """A computation produced non-finite or otherwise unusable values."""
