"""Exception hierarchy shared by every layer of the toolkit.

The CLI maps ``ConfigError`` to exit code 2 and every other
``StirapTomoError`` to exit code 3.
"""

from typing import Optional


class StirapTomoError(Exception):
    """Base class for all errors raised by stirap_tomo."""


class PhysicalityError(StirapTomoError, ValueError):
    """A state or operator violates Hermiticity, positivity or normalisation."""


class DimensionError(StirapTomoError, ValueError):
    """Operand shapes do not match."""


class SupportError(StirapTomoError, ValueError):
    """A state has weight outside the {m, n} block where none is allowed."""


class DegenerateFrameError(StirapTomoError, ValueError):
    """The adiabatic frame is undefined (no field and no detuning)."""


class IntegrationError(StirapTomoError, RuntimeError):
    """The adaptive integrator could not continue."""

    def __init__(self, message: str, t: Optional[float] = None):
        super().__init__(message if t is None else f"{message} (t = {t:.6g})")
        self.t = t


class UnrecoverableAttenuationError(StirapTomoError, RuntimeError):
    """The calibration factor is too small to invert a measured signal."""


class UnidentifiableError(StirapTomoError, ValueError):
    """The measurement settings do not determine every block element."""


class ConfigError(StirapTomoError, ValueError):
    """A configuration file or value is malformed."""

    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        line: Optional[int] = None,
        field: Optional[str] = None,
    ):
        location = ""
        if path is not None:
            location = path if line is None else f"{path}:{line}"
        if field is not None:
            location = f"{location} [{field}]" if location else f"[{field}]"
        super().__init__(f"{location}: {message}" if location else message)
        self.path = path
        self.line = line
        self.field = field
