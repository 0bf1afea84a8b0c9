import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from _gradcheck import TOLERANCE, probe
from osaas_probe import kernels
from osaas_probe import tensor as T


def _rng(seed=0):
    return np.random.default_rng(seed)


# -- convolution ------------------------------------------------------------


def test_conv_delta_kernel_identity():
    x = _rng().normal(size=(1, 9))
    y = T.conv1d_forward(x, np.array([[[0.0, 1.0, 0.0]]]), np.zeros(1))
    assert np.array_equal(y, x)


def test_conv_hand_example():
    y = T.conv1d_forward(np.array([[1.0, 2.0, 3.0]]), np.ones((1, 1, 3)), np.zeros(1))
    assert y.tolist() == [[3.0, 6.0, 5.0]]


def test_conv_bias_only():
    y = T.conv1d_forward(_rng().normal(size=(3, 7)), np.zeros((2, 3, 3)), np.array([2.0, 2.0]))
    assert np.all(y == 2.0) and y.shape == (2, 7)


def test_conv_length_one():
    y = T.conv1d_forward(np.array([[5.0]]), np.array([[[7.0, 2.0, 9.0]]]), np.array([1.0]))
    assert y.tolist() == [[11.0]]


def test_stacked_delta_kernels_compose_to_identity():
    x = _rng(1).normal(size=(4, 3, 11))
    delta = np.zeros((3, 3, 3))
    for c in range(3):
        delta[c, c, 1] = 1.0
    y = x
    for _ in range(3):
        y = T.conv1d_forward(y, delta, np.zeros(3))
    assert np.array_equal(y, x)


def test_conv_shape_errors():
    with pytest.raises(T.ShapeError, match="channels"):
        T.conv1d_forward(np.zeros((2, 5)), np.zeros((1, 3, 3)), np.zeros(1))
    with pytest.raises(T.ShapeError, match="odd"):
        T.conv1d_forward(np.zeros((1, 5)), np.zeros((1, 1, 2)), np.zeros(1))
    with pytest.raises(T.ShapeError, match="bias"):
        T.conv1d_forward(np.zeros((1, 5)), np.zeros((2, 1, 3)), np.zeros(1))
    with pytest.raises(T.ShapeError):
        T.conv1d_forward(np.zeros(5), np.zeros((1, 1, 3)), np.zeros(1))
    with pytest.raises(T.ShapeError, match="grad_out"):
        T.conv1d_backward(np.zeros((3, 5)), np.zeros((1, 5)), np.zeros((2, 1, 3)))


def test_conv_backward_zero_grad_and_bias_sum():
    rng = _rng(2)
    x, w = rng.normal(size=(2, 7)), rng.normal(size=(3, 2, 3))
    gx, gw, gb = T.conv1d_backward(np.zeros((3, 7)), x, w)
    assert not gx.any() and not gw.any() and not gb.any()
    g = rng.normal(size=(3, 7))
    _, _, gb = T.conv1d_backward(g, x, w)
    assert np.allclose(gb, g.sum(axis=1), rtol=0, atol=1e-14)


@pytest.mark.parametrize("shape", [(2, 7), (5, 3, 1), (4, 2, 9)])
def test_conv_gradcheck(shape):
    rng = _rng(3)
    x = rng.normal(size=shape)
    c_in = shape[-2]
    w, b = rng.normal(size=(3, c_in, 3)), rng.normal(size=3)
    R = rng.normal(size=T.conv1d_forward(x, w, b).shape)
    f = lambda: float(np.sum(R * T.conv1d_forward(x, w, b)))
    gx, gw, gb = T.conv1d_backward(R, x, w)
    assert probe(f, {"x": x, "w": w, "b": b}, {"x": gx, "w": gw, "b": gb}, 30, rng) < TOLERANCE


# -- backend equivalence ----------------------------------------------------


def test_backend_selected_at_import():
    assert kernels.BACKEND in kernels.backends()
    assert "python" in kernels.backends()


needs_compiled = pytest.mark.skipif("cython" not in kernels.backends(), reason="compiled kernels not built")


@needs_compiled
@settings(max_examples=40, deadline=None)
@given(
    st.integers(1, 6), st.integers(1, 5), st.integers(1, 12), st.integers(1, 5),
    st.sampled_from([1, 3, 5]), st.integers(0, 2 ** 32 - 1),
)
def test_backends_agree_on_conv(B, C, L, O, P, seed):
    rng = _rng(seed)
    x, w, b = rng.normal(size=(B, C, L)), rng.normal(size=(O, C, P)), rng.normal(size=O)
    g = rng.normal(size=(B, O, L))
    py, cy = kernels.backends()["python"], kernels.backends()["cython"]
    assert np.allclose(py.conv1d_forward(x, w, b), cy.conv1d_forward(x, w, b), rtol=1e-12, atol=1e-12)
    for a, c in zip(py.conv1d_backward(g, x, w), cy.conv1d_backward(g, x, w)):
        assert np.allclose(a, c, rtol=1e-12, atol=1e-12)


@needs_compiled
@given(arrays(np.float64, st.integers(1, 50), elements=st.floats(-30, 30)))
def test_backends_agree_on_selu(x):
    py, cy = kernels.backends()["python"], kernels.backends()["cython"]
    g = np.linspace(-1, 1, x.size)
    assert np.allclose(py.selu_forward(x), cy.selu_forward(x), rtol=1e-14, atol=1e-15)
    assert np.allclose(py.selu_backward(g, x), cy.selu_backward(g, x), rtol=1e-14, atol=1e-15)


@needs_compiled
def test_backends_agree_on_adam():
    states = {}
    for name, mod in kernels.backends().items():
        r = np.random.default_rng(5)
        p, m, v = r.normal(size=50), np.zeros(50), np.zeros(50)
        for t in range(1, 6):
            mod.adam_update(p, r.normal(size=50), m, v, 1e-3, 0.9, 0.999, 1e-8, t)
        states[name] = (p, m, v)
    for a, b in zip(states["python"], states["cython"]):
        assert np.allclose(a, b, rtol=1e-14, atol=1e-16)


# -- dense and activations ----------------------------------------------------


def test_dense_gradcheck():
    rng = _rng(6)
    x, W, b = rng.normal(size=(4, 7)), rng.normal(size=(5, 7)), rng.normal(size=5)
    R = rng.normal(size=(4, 5))
    f = lambda: float(np.sum(R * T.dense_forward(x, W, b)))
    gx, gW, gb = T.dense_backward(R, x, W)
    assert probe(f, {"x": x, "W": W, "b": b}, {"x": gx, "W": gW, "b": gb}, 30, rng) < TOLERANCE


def test_dense_shape_error():
    with pytest.raises(T.ShapeError):
        T.dense_forward(np.zeros(3), np.zeros((2, 4)), np.zeros(2))


@pytest.mark.parametrize("act,back", [(T.selu, T.selu_backward), (T.relu, T.relu_backward)])
def test_activation_gradcheck(act, back):
    rng = _rng(7)
    x = rng.normal(size=(6, 5))
    x[np.abs(x) < 1e-3] = 0.5  # keep probes away from the kink at zero
    R = rng.normal(size=x.shape)
    f = lambda: float(np.sum(R * act(x)))
    assert probe(f, {"x": x}, {"x": back(R, x)}, 25, rng) < TOLERANCE


def test_selu_values():
    assert T.selu(0.0) == 0.0
    assert T.selu(1.0) == pytest.approx(1.0507009873554805)
    assert T.selu(-50.0) == pytest.approx(-1.0507009873554805 * 1.6732632423543772, rel=1e-12)


def test_softmax_values():
    assert T.softmax(np.zeros(4)).tolist() == [0.25] * 4
    p = T.softmax(np.array([[1000.0, 0.0], [-1000.0, 0.0]]))
    assert np.all(np.isfinite(p)) and np.allclose(p.sum(axis=1), 1.0)


@given(arrays(np.float64, (3, 4), elements=st.floats(-10, 10)))
def test_softmax_rows_sum_to_one(z):
    p = T.softmax(z)
    assert np.all((p > 0) & (p < 1))
    assert np.allclose(p.sum(axis=1), 1.0, rtol=0, atol=1e-9)


def test_cross_entropy():
    assert T.cross_entropy(np.eye(4), [0, 1, 2, 3]) == 0.0
    assert T.cross_entropy(np.full((1, 4), 0.25), [2]) == pytest.approx(math.log(4))
    with pytest.raises(IndexError):
        T.cross_entropy(np.full((1, 4), 0.25), [4])
    with pytest.raises(IndexError):
        T.softmax_cross_entropy_backward(np.full((1, 4), 0.25), [-1])


def test_softmax_cross_entropy_gradcheck():
    rng = _rng(8)
    z = rng.normal(size=(5, 4))
    y = rng.integers(0, 4, 5)
    f = lambda: T.cross_entropy(T.softmax(z), y)
    g = T.softmax_cross_entropy_backward(T.softmax(z), y)
    assert probe(f, {"z": z}, {"z": g}, 20, rng) < TOLERANCE


# -- Adam ---------------------------------------------------------------------


def test_adam_zero_grad_keeps_param():
    p = np.array([1.0, -2.0])
    s = T.AdamState.like(p)
    T.adam_step(p, np.zeros(2), s, 1e-3)
    assert p.tolist() == [1.0, -2.0] and s.t == 1


def test_adam_first_step_is_signed_lr():
    p = np.zeros(3)
    s = T.AdamState.like(p)
    T.adam_step(p, np.array([0.3, -7.0, 1e-3]), s, 1e-3)
    assert np.allclose(p, [-1e-3, 1e-3, -1e-3], rtol=1e-4)


def test_adam_deterministic():
    g = _rng(9).normal(size=(3, 2))
    a, b = np.ones((3, 2)), np.ones((3, 2))
    sa = T.AdamState.like(a)
    sb = sa.copy()
    T.adam_step(a, g, sa, 1e-2)
    T.adam_step(b, g, sb, 1e-2)
    assert np.array_equal(a, b) and np.array_equal(sa.m, sb.m) and sa.t == sb.t == 1


def test_adam_matches_reference_formula():
    rng = _rng(10)
    p = rng.normal(size=6)
    ref = p.copy()
    s = T.AdamState.like(p)
    m = np.zeros(6)
    v = np.zeros(6)
    for t in range(1, 4):
        g = rng.normal(size=6)
        T.adam_step(p, g, s, 0.01)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref -= 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    assert np.allclose(p, ref, rtol=1e-13, atol=1e-15)


def test_adam_shape_error():
    with pytest.raises(T.ShapeError):
        T.adam_step(np.zeros(3), np.zeros(4), T.AdamState.like(np.zeros(3)), 1e-3)


def test_kaiming_uniform_bounds():
    w = T.kaiming_uniform(_rng(11), (200, 6), 6)
    assert np.all(np.abs(w) <= math.sqrt(1.0))
    assert np.array_equal(w, T.kaiming_uniform(_rng(11), (200, 6), 6))
