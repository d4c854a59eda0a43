"""Exception and warning types shared across the toolkit.

Two families matter to the CLI: ``DataError`` (bad input, exit code 2) and
``ComputeError`` (a computation failed on valid input, exit code 3).
"""


class LandmarkForensicsError(Exception):
    """Base class for all toolkit errors."""


class DataError(LandmarkForensicsError):
    """Invalid or inconsistent input data."""


class ComputeError(LandmarkForensicsError):
    """A numerical procedure failed on otherwise valid input."""


# -- dataset ----------------------------------------------------------------

class MalformedFile(DataError):
    """A landmark or manifest file does not follow its declared format."""


class WrongPointCount(DataError):
    """A landmark file does not contain exactly 68 points."""


class MissingFile(DataError):
    """A manifest row references a file that does not exist."""


class DuplicateId(DataError):
    """Two records in one dataset share an id."""


class UnknownLabel(DataError):
    """A label outside {real, fake} (or blank for unlabeled)."""


class UnlabeledRecord(DataError):
    """An operation requiring labels met an unlabeled record."""


# -- align ------------------------------------------------------------------

class DegenerateSource(ComputeError):
    """Source points are collinear or coincident; the affine fit is singular."""


class DegenerateLandmarks(ComputeError):
    """A landmark set's inner points cannot anchor an affine fit."""


class EmptyInput(DataError):
    """An operation received an empty collection."""


class EmptyIndexSet(DataError):
    """An index subset argument was empty."""


# -- features ---------------------------------------------------------------

class TooFewSamples(DataError):
    """Standardizer fitting needs at least two samples."""


class AlreadyStandardized(DataError):
    """Attempted to standardize an already-standardized feature vector."""


class DimensionMismatch(DataError):
    """Vector dimensions disagree."""


# -- svm / modelselect / eval -----------------------------------------------

class SingleClass(DataError):
    """Both classes are required but only one is present."""


class ClassTooSmall(DataError):
    """A class has fewer members than the number of folds."""


class AllCellsFailed(ComputeError):
    """Every grid-search cell raised; no model can be selected."""


class MixedLabelGroup(DataError):
    """A video group contains both real and fake records."""


# -- model persistence --------------------------------------------------------

class IoFailure(LandmarkForensicsError):
    """Reading or writing a model file failed."""


class SchemaVersionMismatch(IoFailure):
    """Model file schema version is not supported."""


class CorruptModel(IoFailure):
    """A loaded model violates its structural invariants."""


# -- warnings -----------------------------------------------------------------

class NoConvergenceWarning(RuntimeWarning):
    """SMO stopped before the KKT conditions were met; model still usable."""


class EmptyClassWarning(RuntimeWarning):
    """A density table was requested for a class with no samples."""
