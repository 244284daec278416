
class LoadError(Exception):
    """Exception that represents a dataset or checkpoint file that cannot be
    loaded. The offending path is available as `path`."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
