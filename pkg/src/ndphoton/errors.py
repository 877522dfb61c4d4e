class ParameterError(ValueError):
    """A physical or model parameter lies outside its valid domain."""


class DomainError(ValueError):
    """A formula was evaluated where it is undefined (e.g. zero denominator)."""
