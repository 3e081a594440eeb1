import numpy as np
import pytest

from gbfcd import graph
from gbfcd.raster_io import RasterImage


def quantized_pair(seed, n_levels=8, n_pixels=1024, side=32):
    """Image pair with <= n_levels distinct intensities plus a sample set
    (2 pixels per level) covering every level. The post image shifts two of
    the levels, mimicking a change."""
    rng = np.random.default_rng(seed)
    levels_pre = np.sort(rng.uniform(0, 1, n_levels))
    levels_post = levels_pre.copy()
    levels_post[rng.integers(0, n_levels, 2)] += rng.uniform(0.2, 0.4, 2)
    idx = rng.integers(0, n_levels, n_pixels)
    pre = RasterImage(side, side, levels_pre[idx])
    post = RasterImage(side, side, levels_post[idx])
    samples = np.concatenate([np.flatnonzero(idx == v)[:2] for v in range(n_levels)])
    comp = np.setdiff1d(np.arange(n_pixels), samples)
    s = graph.SampleSet(n_pixels, samples, comp, seed=seed)
    return pre, post, s


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
