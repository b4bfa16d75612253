"""Exception and warning types shared across the package."""


class PsdkError(Exception):
    """Base class for all errors raised by psdk."""


class ShapeMismatchError(PsdkError):
    """Array arguments have incompatible or invalid shapes."""


class NotSymmetricError(PsdkError):
    """A matrix required to be symmetric is not, beyond tolerance."""


class SingularMatrixError(PsdkError):
    """A matrix required to be (numerically) nonsingular is rank deficient."""


class NonPositiveSpectrumError(PsdkError):
    """Leading eigenvalues are not strictly positive where positivity is required."""


class NonPositiveDiagonalError(PsdkError):
    """A triangular factor has a nonpositive entry on its anchored diagonal."""


class NotInManifoldError(PsdkError):
    """A matrix fails the rank-K / anchored-block membership test."""


class IndexSetMismatchError(PsdkError):
    """Operands carry different anchor index sets where a common one is required."""


class EmptyInputError(PsdkError):
    """An operation received an empty collection."""


class ZeroGapError(PsdkError):
    """The eigengap below the retained block is numerically zero."""


class NotOrthogonalError(PsdkError):
    """A matrix expected to be orthogonal fails the check beyond tolerance."""


class NotPsdError(PsdkError):
    """A matrix required to be positive semidefinite has negative spectrum."""


class DegenerateRowsError(PsdkError):
    """No row choice yields a nonsingular anchor block (all pivot scores ~ 0)."""


class InsufficientPointsError(PsdkError):
    """Too few points for the requested fit."""


class ConfigError(PsdkError):
    """Invalid experiment configuration (bad key, value, or combination)."""


class ZeroGapWarning(UserWarning):
    """Aggregation proceeded although the relevant eigengap is ~ 0."""
