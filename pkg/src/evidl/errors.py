"""Exception types raised across the package."""


class EvidlError(Exception):
    """Base class for all package errors."""


class ValidationError(EvidlError, ValueError):
    """Inputs violate a documented precondition."""


class NumericError(EvidlError, ArithmeticError):
    """A computation left the numerically meaningful regime."""


class TotalConflict(NumericError):
    """Two mass functions are fully contradictory; Dempster's rule is undefined."""


class DegenerateNormalizer(NumericError):
    """The normalizing sum of a combined mass vector underflowed to zero."""


class DivergenceDetected(NumericError):
    """Training loss became non-finite."""


class TraceMismatch(ValidationError):
    """A forward trace does not belong to the inputs passed to backward."""


class InsufficientSamples(ValidationError):
    """A class has fewer samples than requested prototypes."""


class CatalogTooLarge(ValidationError):
    """Enumerating every subset of the frame would be unreasonably large."""


class ShapeMismatch(ValidationError):
    """Tensor shapes do not compose."""


class EmptyColumn(ValidationError):
    """A confusion-matrix column sums to zero and cannot be normalized."""


class UndefinedIndex(ValidationError):
    """The Calinski-Harabasz index is undefined for the requested partition."""


class NoCandidateCut(ValidationError):
    """Fewer than three classes leave no dendrogram cut to choose from."""
