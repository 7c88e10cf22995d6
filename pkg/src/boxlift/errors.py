"""Exception types raised by the geometry engine and file parsers."""


class BoxliftError(Exception):
    """Base class for all errors raised by this package."""


class PointBehindCamera(BoxliftError):
    """A point with non-positive depth cannot be projected."""


class NoForwardSolution(BoxliftError):
    """No point in front of the camera lies on the pixel ray at the requested distance."""


class GimbalLock(BoxliftError):
    """Euler decomposition is degenerate (|pitch| at pi/2); angles cannot be recovered."""


class DepthOutOfRange(BoxliftError):
    """Predicted depth falls outside the accepted validity window."""


class NonPositiveHeight(BoxliftError):
    """The height solve produced h <= 0 (top edge at or below the origin row)."""


class SingularProjection(BoxliftError):
    """The linear solve for height has a vanishing coefficient."""


class Unencodable(BoxliftError):
    """A box cannot be encoded (keypoint projects behind the camera)."""


class LengthMismatch(BoxliftError):
    """Paired vectors have different lengths."""


class DegenerateProbability(BoxliftError):
    """Class probability too small for a finite log-loss."""


class MalformedLine(BoxliftError):
    """A label line failed to parse.

    Carries the 1-based line number and, when a specific field failed, the
    0-based field index.
    """

    def __init__(self, message: str, line_number: int = 0, field_index: int | None = None):
        super().__init__(message)
        self.line_number = line_number
        self.field_index = field_index


class MissingProjection(BoxliftError):
    """Calibration text has no P2 projection row."""


class SchemaViolation(BoxliftError):
    """A scene file violates the JSON schema.

    Carries the JSON path of the offending value.
    """

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.path = path
