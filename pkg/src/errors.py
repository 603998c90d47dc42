class DblossError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(DblossError, ValueError):
    pass


class NumericError(DblossError, ArithmeticError):
    pass


class ContractError(DblossError, ValueError):
    pass


class IngestionError(DblossError, ValueError):
    pass


class ConfigError(DblossError, ValueError):
    pass
