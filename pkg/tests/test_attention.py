import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from dualdepth.attention import SAConfig, assemble_input, coordinate_channels, sa_attention
from dualdepth.gradcheck import check_gradients
from dualdepth.tensor_core import Tensor


def T(a):
    return Tensor(np.asarray(a, dtype=np.float64), dtype=np.float64)


def identity_embedding(c):
    return T(np.eye(c).reshape(c, c, 1, 1)), T(np.zeros((1, c, 1, 1)))


def test_config_validation():
    with pytest.raises(ValueError):
        SAConfig(embed_dim=0)
    with pytest.raises(ValueError):
        SAConfig(norm_mode="l2")


def test_assembled_channel_count():
    feats = T(np.zeros((2, 7, 3, 5)))
    img = T(np.zeros((2, 3, 24, 40)))
    assert assemble_input(feats, img).shape == (2, 7 + 3 + 2, 3, 5)


def test_coordinates_span_minus_one_to_one():
    c = coordinate_channels(1, 3, 5)
    np.testing.assert_array_equal(c[0, 0, :, 0], -1)
    np.testing.assert_array_equal(c[0, 0, :, -1], 1)
    np.testing.assert_array_equal(c[0, 1, 0, :], -1)
    np.testing.assert_array_equal(c[0, 1, -1, :], 1)


def test_degenerate_axes_sit_at_zero():
    np.testing.assert_array_equal(coordinate_channels(1, 1, 1), 0)


def test_rgb_channels_are_resized_image():
    img = np.full((1, 3, 8, 8), 0.25)
    out = assemble_input(T(np.zeros((1, 1, 2, 2))), T(img))
    np.testing.assert_allclose(out.data[:, 1:4], 0.25)


@pytest.mark.parametrize("mode", ["raw", "mean", "softmax"])
def test_constant_input_gives_constant_output(mode):
    v = np.array([0.3, -0.2, 0.5])
    x = T(np.broadcast_to(v.reshape(1, 3, 1, 1), (1, 3, 3, 4)).copy())
    w, b = identity_embedding(3)
    out = sa_attention(x, w, b, SAConfig(3, mode)).data[0]
    n = 12
    expected = {"raw": n * (v @ v) * v, "mean": (v @ v) * v, "softmax": v}[mode]
    np.testing.assert_allclose(out, np.broadcast_to(expected.reshape(3, 1, 1), out.shape), atol=1e-12)


def test_orthogonal_pair_in_raw_mode():
    e = np.array([[1.0, 0.0], [0.0, 1.0]])  # positions along width
    x = T(e.T.reshape(1, 2, 1, 2))
    w, b = identity_embedding(2)
    out = sa_attention(x, w, b, SAConfig(2, "raw")).data[0, :, 0, :]
    # weights [[1, 0], [0, 1]] -> each position reproduces itself
    np.testing.assert_allclose(out.T, e, atol=1e-12)


@settings(max_examples=100)
@given(hnp.arrays(np.float64, (1, 3, 2, 3), elements=st.floats(-3, 3)))
def test_softmax_output_in_convex_hull(x):
    w, b = identity_embedding(3)
    out = sa_attention(T(x), w, b, SAConfig(3, "softmax")).data[0].reshape(3, -1)
    pts = x[0].reshape(3, -1)
    # per-coordinate bounds are necessary for hull membership; the weights themselves are checked below
    assert np.all(out <= pts.max(axis=1, keepdims=True) + 1e-9)
    assert np.all(out >= pts.min(axis=1, keepdims=True) - 1e-9)
    sim = pts.T @ pts
    wts = np.exp(sim - sim.max(axis=0, keepdims=True))
    wts /= wts.sum(axis=0, keepdims=True)
    np.testing.assert_allclose(out, pts @ wts, atol=1e-9)
    assert np.all(wts >= 0)


@pytest.mark.parametrize("mode", ["raw", "mean", "softmax"])
def test_permutation_equivariance(mode):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(1, 4, 3, 4))
    w = T(rng.normal(size=(5, 4, 1, 1)))
    b = T(rng.normal(size=(1, 5, 1, 1)))
    perm = rng.permutation(12)
    xp = x.reshape(1, 4, 12)[:, :, perm].reshape(1, 4, 3, 4)
    out = sa_attention(T(x), w, b, SAConfig(5, mode)).data.reshape(1, 5, 12)
    out_p = sa_attention(T(xp), w, b, SAConfig(5, mode)).data.reshape(1, 5, 12)
    np.testing.assert_allclose(out_p, out[:, :, perm], rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("mode", ["raw", "mean", "softmax"])
def test_attention_gradients(mode):
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 3, 2, 3)) * 0.5
    w = rng.normal(size=(4, 3, 1, 1)) * 0.5
    b = rng.normal(size=(1, 4, 1, 1)) * 0.5
    errs = check_gradients(lambda x, w, b: sa_attention(x, w, b, SAConfig(4, mode)), [x, w, b])
    assert max(errs) < 1e-6
