"""Exception hierarchy.

Errors fall into two families that the CLI maps to exit codes: data
problems (bad input files, empty strata, failed transforms) and numerical
failures (separation, rank deficiency, non-convergence).
"""

from __future__ import annotations


class PathLassoError(Exception):
    """Base class for every error raised by this package."""


class UsageError(PathLassoError):
    """Bad invocation: unknown format, invalid argument combination."""


class ConfigError(PathLassoError):
    """Invalid or incomplete pipeline configuration."""


class DataError(PathLassoError):
    pass


class SchemaError(DataError):
    pass


class FormatError(DataError):
    pass


class EmptyDatasetError(DataError):
    pass


class TransformError(DataError):
    pass


class DegenerateBinningError(DataError):
    pass


class EmptyStratumError(DataError):
    pass


class IntegrityError(DataError):
    """A network or edge set references nodes that do not exist."""


class NumericalError(PathLassoError):
    pass


class SeparationError(NumericalError):
    """Complete or quasi-complete separation in a logistic fit."""


class RankError(NumericalError):
    """Singular or numerically rank-deficient information matrix."""


class WeightError(NumericalError):
    pass


class GridError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    """Solver hit its sweep limit.

    The last iterate and its KKT violation are attached so callers can
    decide whether the point is usable.
    """

    def __init__(self, message, coefficients=None, intercept=None, kkt_violation=None):
        super().__init__(message)
        self.coefficients = coefficients
        self.intercept = intercept
        self.kkt_violation = kkt_violation


class LayeringError(NumericalError):
    """A fit failed part-way through layer extraction.

    ``partial`` holds the LayerAssignment built up to the failing iteration.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
