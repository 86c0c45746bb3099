"""Exception types raised across the package."""


class InvalidArgumentError(ValueError):
    """An input violates a documented precondition."""


class NumericalError(ArithmeticError):
    """A computation produced a non-finite value or hit an ill-posed problem."""


class ParseError(ValueError):
    """A data or model file could not be parsed.

    ``row`` and ``column`` locate the offending cell when known (``row`` is
    1-based and counts the header as row 1).
    """

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column
