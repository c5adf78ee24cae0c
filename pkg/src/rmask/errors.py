"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line front end can map
failures onto its documented exit statuses without a lookup table.
"""


class RMaskError(Exception):
    exit_code = 1


class ConfigError(RMaskError, ValueError):
    """Invalid configuration document or command-line usage."""

    exit_code = 2


class ParameterError(ConfigError):
    """A numeric or enum parameter is outside its admissible range."""


class ContractError(RMaskError):
    """An operation was called on input that breaks its precondition."""

    exit_code = 3


class DataError(RMaskError):
    """Input data could not be read or failed validation."""

    exit_code = 3


class ParseError(DataError):
    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class RangeError(DataError):
    pass


class ShapeError(DataError, ValueError):
    pass


class SplitError(DataError):
    pass


class NumericError(RMaskError, ArithmeticError):
    exit_code = 4
