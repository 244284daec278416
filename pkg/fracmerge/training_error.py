
class TrainingError(Exception):
    """Exception raised when training has to be aborted, either because the
    loss diverged or because the training data cannot train anything."""
    pass
