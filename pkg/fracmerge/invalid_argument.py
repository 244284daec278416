
class InvalidArgument(Exception):
    """Exception that represents an invalid command-line or config value (e.g.
    a string where an integer is expected, or a config key that does not
    exist)."""
    pass
