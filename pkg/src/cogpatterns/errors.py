"""Exception hierarchy shared across the pipeline stages."""


class CogpatternsError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CogpatternsError):
    """Invalid configuration value or inconsistent generator/stage settings."""


class CohortFormatError(CogpatternsError):
    """Malformed cohort CSV (bad field count, unparseable value)."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class SchemaMismatchError(CogpatternsError):
    """CSV feature columns do not match the schema file."""


class LabelError(CogpatternsError):
    """Diagnostic label outside the {CN, MCI} vocabulary."""


class DegenerateLabelsError(CogpatternsError):
    """Training labels contain fewer than two classes (or too few per class)."""


class EmptyFeatureError(CogpatternsError):
    """A classifier was given a feature matrix with zero columns."""


class ShapeError(CogpatternsError):
    """Array dimensions inconsistent with the fitted model or companion data."""


class StratificationError(CogpatternsError):
    """A class has fewer samples than the requested number of folds."""


class ParameterError(CogpatternsError):
    """Numeric parameter outside its feasible range (e.g. perplexity vs n)."""


class NumericalFailureError(CogpatternsError):
    """Non-finite values encountered during optimization."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class InvalidMarkerError(CogpatternsError):
    """Marker pixel outside the grid or on a background pixel."""


class InternalConsistencyError(CogpatternsError):
    """Invariant violation inside the segmentation stage (overlapping regions)."""


class InsufficientSamplesError(CogpatternsError):
    """A cluster is too small for the requested statistical comparison."""
