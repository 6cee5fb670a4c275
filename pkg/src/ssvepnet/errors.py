"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Array shapes are incompatible with the requested operation."""


class ParameterError(ValueError):
    """An argument is outside its documented domain."""


class ContractError(RuntimeError):
    """A call violated a precondition of the API (wrong state, wrong tape...)."""


class NumericContractError(ArithmeticError):
    """A numeric guarantee was broken: NaN/Inf, or a non-real inverse transform."""


class FormatError(ValueError):
    """A file does not match its binary layout."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
