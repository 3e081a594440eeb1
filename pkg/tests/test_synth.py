import numpy as np
import pytest

from gbfcd.errors import ConfigError
from gbfcd.synth import generate_synthetic


def test_noiseless_shift_is_exact():
    pre, post, ref = generate_synthetic(16, 16, shift=0.5, noise_sd=0.0, seed=0)
    delta = post.data - pre.data
    np.testing.assert_allclose(delta[ref.data], 0.5, atol=1e-12)
    assert np.all(delta[~ref.data] == 0.0)


def test_seed_determinism():
    a = generate_synthetic(32, 32, seed=9)
    b = generate_synthetic(32, 32, seed=9)
    for x, y in zip(a, b):
        assert np.array_equal(x.data, y.data)


def test_default_profile_changed_area():
    _, _, ref = generate_synthetic(64, 64, change_shape="rect", shift=0.4,
                                   noise_sd=0.05, seed=1)
    assert ref.data.sum() == 256  # centered 16x16 rectangle


def test_disk_shape():
    _, _, ref = generate_synthetic(32, 32, change_shape="disk", shape_size=5, seed=2)
    n = ref.data.sum()
    assert 60 < n < 100  # pi * 25 ~ 79, quantized


def test_shape_out_of_bounds():
    with pytest.raises(ConfigError):
        generate_synthetic(16, 16, shape_size=(20, 4))
    with pytest.raises(ConfigError):
        generate_synthetic(16, 16, change_shape="disk", shape_size=9)


def test_gradient_base():
    pre, _, _ = generate_synthetic(8, 4, noise_sd=0.0, shift=0.0, seed=0)
    grid = pre.as_grid()
    assert grid[0, 0] == 0.0 and grid[0, -1] == 1.0
    assert np.array_equal(grid[0], grid[-1])
