"""Exceptions for the dimensionality reduction core"""


class ArgumentError(ValueError):
    """Raised when an operation receives arguments outside its domain"""


class ConfigurationError(ValueError):
    """Raised when a configuration is inconsistent"""


class DataFormatError(ValueError):
    """Raised when a data file cannot be parsed"""

    def __init__(self, message: str, line_number: int = 0):
        super().__init__(f"line {line_number}: {message}" if line_number else message)
        self.line_number = line_number


class DivergenceError(ArithmeticError):
    """Raised when the separation matrix picks up non-finite entries"""

    def __init__(self, sample_index: int, epoch: int = 0):
        where = f"sample {sample_index}" + (f" of epoch {epoch}" if epoch else "")
        super().__init__(f"separation matrix diverged at {where}")
        self.sample_index = sample_index
        self.epoch = epoch


class ModelFormatError(ValueError):
    """Raised when a model file violates the schema"""


class DiagnosticError(ArithmeticError):
    """Raised when a diagnostic cannot be computed"""


class UsageError(Exception):
    """Raised when the command line cannot be parsed"""
