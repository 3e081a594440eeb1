"""Synthetic change scenes for testing and benchmarking.

The pre image is a horizontal gradient from 0 to 1 plus Gaussian noise; the
post image adds a constant intensity shift inside a rectangle or disk plus
fresh noise. The shape mask is the ground truth.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .raster_io import ChangeMask, RasterImage


def generate_synthetic(
    width: int,
    height: int,
    change_shape: str = "rect",
    shift: float = 0.4,
    noise_sd: float = 0.05,
    seed: int = 1,
    shape_size: tuple[int, int] | int | None = None,
) -> tuple[RasterImage, RasterImage, ChangeMask]:
    """Deterministic (pre, post, reference mask) triplet for one seed.

    shape_size is (w, h) for "rect" (default quarter of each dimension) or
    the radius for "disk" (default quarter of the smaller dimension). The
    shape is centered and must fit inside the image. Noise for the two
    epochs comes from two spawned substreams of the seed, so the pre image
    is identical across different shift values.
    """
    if noise_sd < 0:
        raise ConfigError("noise_sd must be >= 0")
    if change_shape not in ("rect", "disk"):
        raise ConfigError(f"unknown change shape {change_shape!r}")

    cols = np.arange(width, dtype=np.float64)
    base = np.tile(cols / max(width - 1, 1), (height, 1))

    yy, xx = np.mgrid[0:height, 0:width]
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    if change_shape == "rect":
        if shape_size is None:
            sw, sh = max(width // 4, 1), max(height // 4, 1)
        else:
            sw, sh = shape_size
        if sw > width or sh > height or sw < 1 or sh < 1:
            raise ConfigError(f"rect {sw}x{sh} does not fit in {width}x{height}")
        x0 = (width - sw) // 2
        y0 = (height - sh) // 2
        mask = (xx >= x0) & (xx < x0 + sw) & (yy >= y0) & (yy < y0 + sh)
    else:
        radius = shape_size if shape_size is not None else max(min(width, height) // 4, 1)
        if 2 * radius > min(width, height):
            raise ConfigError(f"disk radius {radius} does not fit in {width}x{height}")
        mask = (xx - cx) ** 2 + (yy - cy) ** 2 <= radius**2

    rng_pre, rng_post = (
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2)
    )
    pre = base + rng_pre.normal(0.0, noise_sd, size=base.shape)
    post = pre + shift * mask + rng_post.normal(0.0, noise_sd, size=base.shape)

    return (
        RasterImage(width=width, height=height, data=pre),
        RasterImage(width=width, height=height, data=post),
        ChangeMask(width=width, height=height, data=mask),
    )
