class ConfigurationError(ValueError):
    """Invalid physical or numerical configuration (grid guards, waists, widths)."""


class ContractError(ValueError):
    """Inputs that violate an operation's preconditions (mismatched grids etc.)."""
