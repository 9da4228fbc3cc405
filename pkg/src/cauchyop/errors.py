"""Exception types raised across the package."""


class CauchyOpError(Exception):
    """Base class for all package errors."""


class NonSquareMatrix(CauchyOpError, ValueError):
    pass


class DimensionMismatch(CauchyOpError, ValueError):
    pass


class SingularNormalBlock(CauchyOpError, ValueError):
    pass


class SingularB0(CauchyOpError, ValueError):
    pass


class EmptyGrid(CauchyOpError, ValueError):
    pass


class SizeMismatch(CauchyOpError, ValueError):
    pass


class NullEigenvalue(CauchyOpError, ArithmeticError):
    pass


class SectorViolation(CauchyOpError, ArithmeticError):
    pass


class IllConditionedEigenbasis(CauchyOpError, ArithmeticError):
    """Raised by channel-wise operations on a decomposition in Schur mode."""


class SymbolUndefinedAtEigenvalue(CauchyOpError, ValueError):
    pass


class NegativeTime(CauchyOpError, ValueError):
    pass


class NotInHardyRange(CauchyOpError, ValueError):
    pass


class SliceNotInH(CauchyOpError, ValueError):
    pass


class UnsupportedAlpha(CauchyOpError, ValueError):
    pass


class SeriesDiverged(CauchyOpError, ArithmeticError):
    def __init__(self, msg, increments=None):
        super().__init__(msg)
        self.increments = increments


class NonzeroMeanNegativeOrder(CauchyOpError, ValueError):
    pass


class DimensionUnsupported(CauchyOpError, ValueError):
    pass


class GridTooLarge(CauchyOpError, ValueError):
    pass


class SingularSystem(CauchyOpError, ArithmeticError):
    pass


class ConfigError(CauchyOpError, ValueError):
    pass


class NotHermitianWarning(UserWarning):
    pass


class ContractionWarning(UserWarning):
    pass
