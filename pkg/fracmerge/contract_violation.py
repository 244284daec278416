
class ContractViolation(Exception):
    """Exception raised when a caller breaks an internal contract between
    pipeline stages (e.g. handing an anchor fragment to the forward diffusion
    process)."""
    pass
