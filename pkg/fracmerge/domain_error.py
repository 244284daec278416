
class DomainError(ValueError):
    """Exception raised when an operation is called outside of its domain (e.g.
    a non-finite coordinate, or asking for more samples than there are
    points)."""
    pass
