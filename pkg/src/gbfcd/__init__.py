"""Graph-based fusion change detection for co-registered single-band
image pairs."""

__version__ = "0.1.0"

from .errors import ConfigError, GbfcdError, NumericalError, RasterIOError
from .raster_io import ChangeMask, RasterImage

__all__ = [
    "ChangeMask",
    "ConfigError",
    "GbfcdError",
    "NumericalError",
    "RasterIOError",
    "RasterImage",
    "__version__",
]
