class DomainError(ValueError):
    """Raised when an input violates an operation's preconditions."""


class RefinementDiverged(DomainError):
    """Non-finite energy during refinement; ``trace`` holds what was logged so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
