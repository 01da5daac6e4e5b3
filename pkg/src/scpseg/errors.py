"""Exception and warning types shared across the package."""


class ScpsegError(Exception):
    """Base class for all errors raised by this package."""


class IoError(ScpsegError):
    """File could not be read or written."""


class UnsupportedFormat(ScpsegError):
    """Input file is not one of the accepted formats."""


class CorruptImage(ScpsegError):
    """Image file is malformed or truncated."""


class ImageTooSmall(ScpsegError):
    """Image is too small for the configured filter support."""


class ImageTooLarge(ScpsegError):
    """Image exceeds the configured size cap."""


class KTooLarge(ScpsegError):
    """Requested neighbor count exceeds the candidate window."""


class IndexOutOfRange(ScpsegError):
    """A node or pixel index falls outside the valid range."""


class DimensionMismatch(ScpsegError):
    """Operand shapes do not agree."""


class SampleTooLarge(ScpsegError):
    """Requested sample size exceeds the population."""


class UnselectedConstraintPixel(ScpsegError):
    """A constrained pixel is missing from the selection index."""


class UnselectedLabeledPixel(ScpsegError):
    """A labeled pixel is missing from the selection index."""


class LengthMismatch(ScpsegError):
    """Two labelings have different lengths."""


class NonFinite(ScpsegError):
    """A computation produced NaN or infinity."""


class SizeGuard(ScpsegError):
    """Problem size exceeds the limit of a dense reference routine."""


class NoConvergence(ScpsegError):
    """An iterative routine failed to converge."""


class DegenerateSplit(ScpsegError):
    """A graph cut left one side of the partition empty."""


class EmptyCluster(ScpsegError):
    """k-means produced an empty cluster."""


class ConfigError(ScpsegError):
    """Run configuration is inconsistent or incomplete."""


class MissingGroundTruth(ScpsegError):
    """No ground truth is available for an image under evaluation."""


class UnknownSession(ScpsegError):
    """No session exists with the given id."""


class PixelOutOfRange(ScpsegError):
    """A scribble coordinate falls outside the image."""


class NumericalFailure(ScpsegError):
    """A numerical stage failed irrecoverably."""


class ZeroVarianceFeature(UserWarning):
    """A feature column is constant over the image (zeroed, not fatal)."""


class SingleLabel(UserWarning):
    """Only one region label is present; no cannot-links can be derived."""


class NoConvergenceWarning(UserWarning):
    """Eigensolver hit its iteration cap; best available pairs returned."""
