import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from _oracles import block_match_shift
from irseg.errors import UsageError
from irseg.flow import optical_flow, zero_flow


def smooth_texture(shape, seed):
    rng = np.random.default_rng(seed)
    return 100.0 * gaussian_filter(rng.standard_normal(shape), 3.0)


def test_identical_frames_give_exactly_zero():
    frame = smooth_texture((30, 40), 0)
    flow = optical_flow(frame, frame)
    assert np.all(flow == 0.0)
    assert flow.shape == (30, 40, 2)


def test_constant_frames_are_zero_not_nan():
    prev = np.full((20, 20), 7.0)
    flow = optical_flow(prev, prev + 5.0)
    assert np.all(np.isfinite(flow))
    assert np.all(flow == 0.0)


def test_linear_ramp_single_pixel_shift():
    # a pure x-ramp shifted right by one pixel: u ~ +1, v ~ 0
    x = np.arange(50, dtype=np.float64)
    prev = np.tile(50.0 * x, (40, 1))
    cur = np.roll(prev, 1, axis=1)
    flow = optical_flow(prev, cur)
    interior = flow[8:-8, 8:-8]
    assert np.abs(interior[..., 0] - 1.0).max() < 0.1
    assert np.abs(interior[..., 1]).max() < 0.1


def test_textured_shift_matches_block_matching():
    prev = smooth_texture((48, 64), 3)
    cur = np.roll(prev, 1, axis=1)          # content moves +1 in x
    assert block_match_shift(prev, cur) == (1, 0)
    flow = optical_flow(prev, cur)
    interior = flow[8:-8, 8:-8]
    assert abs(np.median(interior[..., 0]) - 1.0) < 0.1
    assert abs(np.median(interior[..., 1])) < 0.1
    # vertical shift, same contract
    cur_v = np.roll(prev, 1, axis=0)
    assert block_match_shift(prev, cur_v) == (0, 1)
    flow_v = optical_flow(prev, cur_v)
    interior_v = flow_v[8:-8, 8:-8]
    assert abs(np.median(interior_v[..., 1]) - 1.0) < 0.1
    assert abs(np.median(interior_v[..., 0])) < 0.1


def test_swapping_frames_negates_the_field():
    prev = smooth_texture((32, 32), 5)
    cur = np.roll(prev, 1, axis=1)
    fwd = optical_flow(prev, cur)
    bwd = optical_flow(cur, prev)
    assert np.allclose(bwd, -fwd, atol=1e-12)


def test_validation():
    good = np.zeros((8, 8))
    with pytest.raises(UsageError, match="shapes differ"):
        optical_flow(good, np.zeros((8, 9)))
    with pytest.raises(UsageError, match="2-D"):
        optical_flow(np.zeros(8), np.zeros(8))
    with pytest.raises(UsageError, match="odd"):
        optical_flow(good, good, window=8)
    with pytest.raises(UsageError, match="odd"):
        optical_flow(good, good, window=1)
    with pytest.raises(UsageError, match="positive"):
        optical_flow(good, good, weight_sigma=0.0)


def test_zero_flow_shape():
    z = zero_flow((5, 9))
    assert z.shape == (5, 9, 2)
    assert np.all(z == 0.0)
