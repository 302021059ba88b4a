"""Exception types shared across the package."""


class CsegError(Exception):
    """Base class for all package-specific errors."""


class UnsupportedFormatError(CsegError):
    """File extension or magic bytes not among the supported formats."""


class CorruptFileError(CsegError):
    """File recognized but its contents cannot be decoded."""


class ShapeMismatchError(CsegError):
    """Declared dimensions disagree with the payload or a companion input."""


class NotNormalizedError(CsegError):
    """Probability map whose per-pixel slice does not sum to 1 within 1e-4."""


class DimensionMismatchError(CsegError):
    """Two rasters that must share a pixel grid do not."""


class DepthMismatchError(CsegError):
    """Field depth does not match the expected class count."""


class ClassWithoutScribbleError(CsegError):
    """A class in the class set has no scribble to estimate features from."""


class ConflictingScribblesError(CsegError):
    """One graph node is covered by scribbles of two different regions."""


class OutOfBoundsError(CsegError):
    """Scribble polyline points fall outside the pixel grid."""


class PolicyViolationError(CsegError):
    """A scribble set failed policy validation; carries the report."""

    def __init__(self, report):
        super().__init__(f"scribble policy violations: {report.violations}")
        self.report = report


class NothingToCorrectError(CsegError):
    """Correction requested but the prediction has no mislabeled pixel."""


class UnseededRegionError(CsegError):
    """A scribble region covers no graph node."""


class NonConvergenceError(CsegError):
    """Fusion loop exhausted its iteration budget with unlabeled groups left."""


class TooLargeError(CsegError):
    """Instance exceeds the size limit of an exhaustive routine."""


class MissingRootError(CsegError):
    """Connectivity variant requires a scribbled root node for every class."""
