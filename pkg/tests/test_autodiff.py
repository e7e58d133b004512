import numpy as np
import pytest
from hypothesis import given, strategies as st

from eventface import autodiff as ad
from eventface import oracles
from eventface.autodiff import Tensor, gradcheck


def _t(a, grad=True):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=grad)


def test_float64_storage():
    assert Tensor([1, 2, 3]).data.dtype == np.float64


def test_chain_rule_by_hand():
    x = _t(3.0)
    y = x * x + 2.0 * x  # dy/dx = 2x + 2
    y.backward()
    assert x.grad == pytest.approx(8.0)


def test_shared_subexpression_accumulates():
    x = _t([1.0, -2.0])
    a = ad.exp(x)
    ad.tsum(a * a + a).backward()
    e = np.exp(x.data)
    np.testing.assert_allclose(x.grad, 2 * e * e + e)


def test_broadcast_gradient_is_reduced():
    x, b = _t(np.ones((3, 4))), _t(np.ones(4))
    ad.tsum(x * b).backward()
    assert b.grad.shape == (4,)
    np.testing.assert_array_equal(b.grad, np.full(4, 3.0))


def test_no_grad_records_nothing():
    x = _t([1.0])
    with ad.no_grad():
        y = x * 2.0
    assert y.is_leaf and not y.requires_grad


def test_frozen_leaf_gets_no_gradient():
    x, w = _t([1.0, 2.0]), _t([3.0, 4.0], grad=False)
    ad.tsum(x * w).backward()
    assert w.grad is None
    np.testing.assert_array_equal(x.grad, [3.0, 4.0])


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1)])
def test_conv2d_matches_loop(rng, stride, padding):
    x, w = rng.normal(size=(2, 3, 7, 5)), rng.normal(size=(4, 3, 3, 3))
    got = ad.conv2d(Tensor(x), Tensor(w), stride=stride, padding=padding).data
    np.testing.assert_allclose(got, oracles.conv2d_loop(x, w, stride, padding), atol=1e-12)


@pytest.mark.parametrize("k", [3, 5, 7])
def test_depthwise_matches_loop(rng, k):
    x, w = rng.normal(size=(2, 3, 6, 6)), rng.normal(size=(3, 1, k, k))
    got = ad.depthwise_conv2d(Tensor(x), Tensor(w)).data
    np.testing.assert_allclose(got, oracles.depthwise_conv2d_loop(x, w), atol=1e-12)


def test_linear_matches_loop(rng):
    x, w = rng.normal(size=(2, 3, 4)), rng.normal(size=(4, 5))
    np.testing.assert_allclose(ad.linear(Tensor(x), Tensor(w)).data, oracles.linear_loop(x, w), atol=1e-12)


def test_layer_norm_statistics(rng):
    x = rng.normal(3.0, 5.0, size=(4, 16))
    y = ad.layer_norm(Tensor(x), Tensor(np.ones(16)), Tensor(np.zeros(16))).data
    np.testing.assert_allclose(y.mean(-1), 0.0, atol=1e-12)
    np.testing.assert_allclose(y.var(-1), 1.0, atol=1e-5)


def test_shape_errors():
    with pytest.raises(ad.ShapeError):
        ad.conv2d(Tensor(np.zeros((1, 3, 4, 4))), Tensor(np.zeros((2, 4, 3, 3))))
    with pytest.raises(ad.ShapeError):
        ad.linear(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))))


@given(st.integers(-3, 3), st.integers(-3, 3), st.integers(1, 5), st.integers(1, 5))
def test_shift2d_matches_index_oracle(dh, dw, h, w):
    x = np.arange(2 * h * w * 3, dtype=np.float64).reshape(2, h, w, 3)
    got = ad.shift2d(Tensor(x), dh, dw).data
    np.testing.assert_array_equal(got, oracles.shift2d_loop(x, dh, dw))


@pytest.mark.parametrize(
    "fn,shapes",
    [
        (lambda a, b: ad.tsum(a * b, axis=0), [(3, 4), (4,)]),
        (lambda a: ad.sqrt(ad.exp(a) + 1.0), [(5,)]),
        (lambda a: ad.take(a, np.array([2, 0, 0, 1]), axis=1), [(2, 3)]),
        (lambda a: ad.concat(ad.split(a, 2, axis=-1)[::-1], axis=-1), [(3, 4)]),
        (lambda a: ad.shift2d(a, 1, -1), [(2, 3, 4, 2)]),
        (lambda a: ad.transpose(a, (2, 0, 1)).reshape(-1, 2), [(2, 3, 2)]),
        (lambda a, b: a / b, [(3,), (3,)]),
    ],
)
def test_gradcheck_misc_ops(rng, fn, shapes):
    inputs = [_t(rng.uniform(0.5, 1.5, size=s)) for s in shapes]
    assert gradcheck(fn, inputs, eps=1e-6) <= 1e-6


def test_gradcheck_detects_wrong_gradient(rng):
    def bad(a):
        out = ad._result(a.data**2, (a,), lambda g: (g * a.data,), "bad_square")  # should be 2a
        return out

    assert gradcheck(bad, [_t(rng.uniform(1, 2, size=3))]) > 0.1
