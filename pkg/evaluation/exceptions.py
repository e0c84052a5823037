class MetricError(ValueError):
    """A metric cannot be computed from the given inputs."""
