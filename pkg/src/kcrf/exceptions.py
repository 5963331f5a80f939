"""Exception hierarchy shared across the package."""


class KCRFError(Exception):
    """Base class for all errors raised by kcrf."""


class DimensionError(KCRFError, ValueError):
    pass


class ConfigurationError(KCRFError, ValueError):
    pass


class InputError(KCRFError, ValueError):
    pass


class SizeError(KCRFError, ValueError):
    pass


class NumericalError(KCRFError, ArithmeticError):
    pass


class DegenerateKernelError(NumericalError):
    pass


class ParseError(KCRFError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(ParseError):
    pass


class EmptyDatasetError(ParseError):
    pass
