"""Exception hierarchy shared across the pipeline.

Each class carries the process exit code the CLI maps it to.
"""


class GbfcdError(Exception):
    exit_code = 1


class ConfigError(GbfcdError):
    """Invalid configuration or incompatible inputs."""

    exit_code = 2


class RasterIOError(GbfcdError):
    """Unreadable, unsupported, or malformed raster file."""

    exit_code = 3


class NumericalError(GbfcdError):
    """Degenerate data that makes a pipeline stage meaningless."""

    exit_code = 4
