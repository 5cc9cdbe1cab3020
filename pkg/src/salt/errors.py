"""Errors raised when a caller breaks an API contract."""


class ContractViolation(ValueError):
    """Input violates a documented precondition (shape, range, or mode mismatch)."""
