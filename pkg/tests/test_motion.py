import numpy as np
import pytest

from eventface import autodiff as ad
from eventface import oracles
from eventface.autodiff import Tensor
from eventface.motion import InsufficientFramesError, MpeParams, motion_map, mpe_pairwise, mpe_sequence


def test_motion_map_matches_loop_oracle(rng):
    p = MpeParams.init(4, 2, rng, kernels=(5, 3))
    a, b = rng.normal(size=(1, 4, 6, 6)), rng.normal(size=(1, 4, 6, 6))
    reduce = p.reduce.data
    ra = oracles.conv2d_loop(a, reduce)
    rb = oracles.conv2d_loop(b, reduce)
    want = oracles.depthwise_conv2d_loop(rb, p.dw_large.data) - oracles.depthwise_conv2d_loop(ra, p.dw_small.data)
    got = motion_map(Tensor(a), Tensor(b), p.reduce, p.dw_large, p.dw_small).data
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_static_frames_cancel_with_equal_kernels(rng):
    # with equal kernels the map is a pure temporal difference
    p = MpeParams.init(4, 2, rng, kernels=(5, 3))
    x = Tensor(rng.normal(size=(1, 4, 6, 6)))
    m = motion_map(x, x, p.reduce, p.dw_small, p.dw_small).data
    assert np.abs(m).max() == 0.0


def test_sequence_shapes(rng):
    p = MpeParams.init(8, 4, rng)
    out = mpe_sequence(Tensor(rng.normal(size=(2, 4, 8, 5, 5))), p)
    assert out.shape == (2, 3, 8, 5, 5)
    single = mpe_sequence(Tensor(rng.normal(size=(4, 8, 5, 5))), p)
    assert single.shape == (3, 8, 5, 5)


def test_pairwise_single_frame_shape(rng):
    p = MpeParams.init(8, 2, rng)
    x = Tensor(rng.normal(size=(8, 4, 4)))
    assert mpe_pairwise(x, x, p).shape == (4, 4, 4)


def test_pair_order_matters(rng):
    p = MpeParams.init(4, 2, rng)
    f = rng.normal(size=(1, 2, 4, 5, 5))
    fwd = mpe_sequence(Tensor(f), p).data
    rev = mpe_sequence(Tensor(f[:, ::-1].copy()), p).data
    assert not np.allclose(fwd, rev)


def test_errors(rng):
    p = MpeParams.init(4, 4, rng)
    with pytest.raises(InsufficientFramesError):
        mpe_sequence(Tensor(rng.normal(size=(1, 1, 4, 5, 5))), p)
    with pytest.raises(ad.ShapeError):
        mpe_sequence(Tensor(rng.normal(size=(1, 3, 4, 5, 5))), p)  # built for 4 frames
    with pytest.raises(ValueError):
        MpeParams.init(4, 2, rng, kernels=(3, 5))
    with pytest.raises(ad.ShapeError):
        motion_map(Tensor(np.zeros((1, 4, 4, 4))), Tensor(np.zeros((1, 4, 5, 5))), p.reduce, p.dw_large, p.dw_small)
