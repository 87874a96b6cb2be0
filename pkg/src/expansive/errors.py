"""Exception hierarchy shared by all modules."""


class ExpansiveError(Exception):
    exit_code = 1


class ConfigError(ExpansiveError):
    exit_code = 2


class DomainError(ExpansiveError):
    """Input outside the region where the requested quantity exists."""

    exit_code = 3


class PrecisionError(ExpansiveError):
    """Working precision or truncation budget could not certify a result."""

    exit_code = 4


class SizeGuardError(ExpansiveError):
    exit_code = 5


class ContractError(ExpansiveError):
    """A formula was requested outside the regime it is valid in."""

    exit_code = 6
