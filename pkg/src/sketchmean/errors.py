"""Exception types shared across the package."""


class SketchMeanError(Exception):
    """Base class for all library-specific errors."""


class ParameterError(SketchMeanError, ValueError):
    """An argument is out of its documented range."""


class DimensionError(SketchMeanError, ValueError):
    """A vector/matrix dimension is invalid or inconsistent."""


class ProtocolError(SketchMeanError, ValueError):
    """Messages handed to a decoder do not belong to it (mixed or wrong scheme tags)."""


class DegenerateTransformError(SketchMeanError, ArithmeticError):
    """The eigenvalue transform produced a non-positive value on a retained eigenvalue."""


class NumericalError(SketchMeanError, RuntimeError):
    """A numerical routine failed to converge or produced invalid output."""


class CalibrationError(SketchMeanError, RuntimeError):
    """Monte-Carlo calibration could not produce a usable scaling constant."""


class UndefinedCorrelationError(SketchMeanError, ValueError):
    """Correlation is undefined (all client vectors are zero)."""


class FormatError(SketchMeanError, ValueError):
    """A data file does not match its expected on-disk format."""
