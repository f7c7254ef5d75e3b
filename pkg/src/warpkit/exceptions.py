"""Exception types raised by warpkit.

Every operation documents which of these it may raise; anything else
escaping the package is a bug.
"""


class WarpkitError(Exception):
    """Base class for all warpkit errors."""


# --- series / dataset validation ---

class EmptySeries(WarpkitError):
    """A series with zero frames or zero channels."""


class NonFinite(WarpkitError):
    """A NaN or Inf entry; carries the first offending (row, col) index."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class RaggedRows(WarpkitError):
    """Rows of a series do not all have the same channel count."""


class ManifestParse(WarpkitError):
    """Dataset manifest could not be parsed."""


class MissingFile(WarpkitError):
    """A file referenced by a manifest does not exist."""


class DimensionMismatch(WarpkitError):
    """Operands have incompatible channel dimensions."""


class EmptyDataset(WarpkitError):
    """An operation that needs at least one series got none."""


# --- kernels ---

class TooLarge(WarpkitError):
    """Alignment enumeration would exceed the configured path cap."""


class NonPositiveSigma(WarpkitError):
    """Bandwidth sigma must be strictly positive."""


class NonPositiveT(WarpkitError):
    """Temperature t must be strictly positive."""


# --- PSD repair ---

class NotSymmetric(WarpkitError):
    """Matrix expected to be symmetric is not (within tolerance)."""


class NonZeroDiagonal(WarpkitError):
    """Distance matrix has nonzero diagonal entries."""


class NegativeDistance(WarpkitError):
    """Distance matrix has negative entries."""


class NoConvergence(WarpkitError):
    """Iteration cap hit before the convergence test; the best iterate is
    attached as ``result``."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


# --- SVM ---

class SingleClass(WarpkitError):
    """Binary training requires both labels to be present."""


class IndefiniteGram(WarpkitError):
    """Gram matrix is too far from positive semi-definite to train on."""


class ShapeMismatch(WarpkitError):
    """Array arguments have inconsistent shapes."""


# --- evaluation ---

class SingleSubject(WarpkitError):
    """Leave-one-subject-out needs at least two subjects."""


class OneClassOnly(WarpkitError):
    """ROC needs both positive and negative examples."""


# --- shape model ---

class TooFewFrames(WarpkitError):
    """Not enough frames to fit the requested number of components."""


class DegenerateData(WarpkitError):
    """Training frames have lower rank than the requested component count;
    carries the achievable ``rank``."""

    def __init__(self, message, rank=None):
        super().__init__(message)
        self.rank = rank


class DegenerateFrame(WarpkitError):
    """Coincident or collinear landmarks make the rigid fit ill-defined."""


class InvalidSpec(WarpkitError):
    """Synthetic dataset specification is inconsistent."""
