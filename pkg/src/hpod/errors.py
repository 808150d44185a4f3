class HpodError(Exception):
    """Base class for package errors."""


class ConfigError(HpodError, ValueError):
    pass


class DataError(HpodError, ValueError):
    pass


class NumericalError(HpodError, ArithmeticError):
    pass


class VersionMismatch(HpodError):
    pass
