"""Exception hierarchy for the segmentation engine.

Grouped by how the CLI maps them to exit codes: ``UsageError`` subclasses
signal caller mistakes (exit 1), ``DataError`` subclasses signal bad input
files or numeric failures (exit 2).
"""


class PatchSegError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(PatchSegError):
    """Invalid arguments or configuration supplied by the caller."""


class DataError(PatchSegError):
    """Input data violates a contract (corrupt file, bad dimensions, ...)."""


# --- feature files / geometry ------------------------------------------------

class DimensionTooSmall(UsageError):
    """Image side shorter than one patch."""


class BadMagic(DataError):
    """Feature file does not start with the expected magic bytes."""


class VersionMismatch(DataError):
    """Feature file declares an unsupported format version."""


class CorruptHeader(DataError):
    """Feature file header fields are inconsistent."""


class ZeroNormFeature(DataError):
    """A patch feature vector has zero Euclidean norm."""


class TruncatedPayload(DataError):
    """Feature payload length does not match the header."""


class IoFailure(DataError):
    """Underlying file operation failed."""


# --- spectral ----------------------------------------------------------------

class ConvergenceFailure(DataError):
    """Eigensolver did not converge."""


class TooFewEigenvalues(UsageError):
    """Spectrum too short for elbow analysis (need at least 4 eigenvalues)."""


# --- clustering --------------------------------------------------------------

class BadBeta(UsageError):
    """Bandwidth parameter outside the open interval (0, 1)."""


class SingleCluster(UsageError):
    """Silhouette requires at least two distinct labels."""


# --- CRF ---------------------------------------------------------------------

class BadK(UsageError):
    """Label count too small for the requested operation."""


class DimensionMismatch(UsageError):
    """Array shapes do not agree."""


class PixelBudgetExceeded(UsageError):
    """Image larger than the configured CRF inference budget."""


class MissingImageForCrf(UsageError):
    """CRF refinement requested but no color image supplied."""


# --- pipeline / rendering ----------------------------------------------------

class TooManyLabels(UsageError):
    """Mask has more labels than the 8-bit palette can hold."""


# --- synthetic generator -----------------------------------------------------

class CannotPlaceCenters(UsageError):
    """Requested center count/angle is infeasible in the given dimension."""


class BadShape(UsageError):
    """Block-model shape parameters are inconsistent."""
