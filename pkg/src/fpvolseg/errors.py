"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: parameter problems are usage errors,
format/data problems are data errors, numeric/contract problems are
numeric errors.
"""


class FPVolSegError(Exception):
    """Base class for all package errors."""


class ParameterError(FPVolSegError, ValueError):
    pass


class FormatError(FPVolSegError, ValueError):
    pass


class CorruptFileError(FormatError):
    pass


class DataError(FPVolSegError, ValueError):
    pass


class DimensionError(DataError):
    pass


class KindError(DataError):
    pass


class BoundsError(DataError, IndexError):
    pass


class CapacityError(DataError):
    pass


class PlacementError(DataError):
    pass


class NumericError(FPVolSegError, ArithmeticError):
    pass


class ContractError(NumericError):
    pass


class CoverageError(ContractError):
    pass


class RangeError(NumericError, ValueError):
    pass
