class ConfigError(ValueError):
    """A scenario file that cannot be parsed or does not validate; the message carries line numbers."""


class RunError(RuntimeError):
    """A scenario run that hit a broken invariant and could not finish."""
