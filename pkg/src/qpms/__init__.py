"""Spatiotemporal quantum parametric mode sorting: simulation and pump optimization."""

from qpms.errors import ConfigurationError, ContractError

__version__ = "0.1.0"

__all__ = ["ConfigurationError", "ContractError", "__version__"]
