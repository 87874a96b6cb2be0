"""Asymptotic enumeration of expansive multisets: exact series, saddle points,
counting formulas, Boltzmann sampling and local limit checks."""

from .errors import ConfigError, ContractError, DomainError, ExpansiveError, PrecisionError, SizeGuardError
from .model import Constant, ExpansiveSpec, LogLogPower, LogPower, Product, coeff_c, working_precision

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ContractError", "DomainError", "ExpansiveError", "PrecisionError", "SizeGuardError",
    "Constant", "ExpansiveSpec", "LogLogPower", "LogPower", "Product", "coeff_c", "working_precision",
    "__version__",
]
