import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from dualdepth.gradcheck import check_gradients
from dualdepth.losses import (LossWeights, ScaleTerms, feature_recon_loss, min_over_sources, photometric_error,
                              photometric_loss, smoothness_loss, ssim_map, total_loss)
from dualdepth.tensor_core import ShapeError, Tensor

from oracles import ssim_loss_constant


def T(a):
    return Tensor(np.asarray(a, dtype=np.float64), dtype=np.float64)


def ones_like(x):
    return T(np.ones(x.shape[:1] + (1,) + x.shape[2:]))


def row(values):
    return T(np.asarray(values, dtype=np.float64).reshape(1, 1, 1, -1))


images = hnp.arrays(np.float64, (1, 3, 5, 6), elements=st.floats(0, 1))


# --- ssim ------------------------------------------------------------------


@settings(max_examples=20)
@given(images)
def test_ssim_of_identical_images_is_zero(a):
    np.testing.assert_allclose(ssim_map(T(a), T(a)).data, 0.0, atol=1e-12)


def test_ssim_constant_zero_vs_one():
    out = ssim_map(T(np.zeros((1, 1, 4, 4))), T(np.ones((1, 1, 4, 4))))
    np.testing.assert_allclose(out.data, ssim_loss_constant(0.0, 1.0), rtol=1e-12)
    assert ssim_loss_constant(0.0, 1.0) == pytest.approx(0.49995, abs=1e-5)


@settings(max_examples=20)
@given(images, images)
def test_ssim_symmetric_and_bounded(a, b):
    ab = ssim_map(T(a), T(b)).data
    np.testing.assert_allclose(ab, ssim_map(T(b), T(a)).data, atol=1e-12)
    assert ab.min() >= 0 and ab.max() <= 1


def test_ssim_rejects_shape_mismatch():
    with pytest.raises(ShapeError):
        ssim_map(T(np.zeros((1, 1, 3, 3))), T(np.zeros((1, 1, 3, 4))))


def test_ssim_gradient():
    rng = np.random.default_rng(0)
    a, b = rng.uniform(0, 1, (1, 2, 5, 5)), rng.uniform(0, 1, (1, 2, 5, 5))
    assert max(check_gradients(ssim_map, [a, b])) < 1e-5


# --- photometric -------------------------------------------------------------


def test_photometric_zero_when_warp_is_exact():
    img = T(np.random.default_rng(1).uniform(0, 1, (2, 3, 6, 6)))
    assert photometric_loss(img, [(img, ones_like(img))]).item() == 0.0


def test_photometric_min_over_two_sources_l1_only():
    tgt = row([0.0, 0.0])
    loss = photometric_loss(tgt, [(row([1.0, 5.0]), row([1, 1])), (row([3.0, 2.0]), row([1, 1]))], alpha=0.0)
    assert loss.item() == pytest.approx(1.5)


def test_blend_arithmetic():
    # alpha * ssim + (1 - alpha) * l1 at one pixel
    assert 0.85 * 0.2 + 0.15 * 0.4 == pytest.approx(0.23)
    tgt = T(np.zeros((1, 1, 3, 3)))
    warped = T(np.full((1, 1, 3, 3), 0.4))
    err = photometric_error(tgt, warped, 0.85).data
    ssim = ssim_map(tgt, warped).data
    np.testing.assert_allclose(err, 0.85 * ssim + 0.15 * 0.4, rtol=1e-12)


def test_invalid_everywhere_pixel_is_dropped_from_mean():
    tgt = row([0.0, 0.0, 0.0])
    loss = photometric_loss(tgt, [(row([1.0, 3.0, 9.0]), row([1, 1, 0])), (row([2.0, 1.0, 9.0]), row([0, 1, 0]))],
                            alpha=0.0)
    # pixel 0 -> 1 (only source 0 valid), pixel 1 -> min(3, 1), pixel 2 uncovered
    assert loss.item() == pytest.approx(1.0)


def test_all_invalid_gives_zero():
    tgt = row([0.0, 0.0])
    assert photometric_loss(tgt, [(row([1.0, 1.0]), row([0, 0]))], alpha=0.0).item() == 0.0


@settings(max_examples=25)
@given(hnp.arrays(np.float64, (3, 1, 1, 6), elements=st.floats(0, 5)),
       hnp.arrays(np.bool_, (3, 1, 1, 6)))
def test_adding_a_source_never_increases_loss(errs, valid):
    """With a fixed covered set, the per-pixel minimum can only drop."""
    valid = valid.copy()
    valid[0] = True
    pairs = [(T(errs[k:k + 1]), T(valid[k:k + 1].astype(float))) for k in range(3)]
    losses = [min_over_sources(pairs[:k]).item() for k in (1, 2, 3)]
    assert losses[0] >= 0
    assert losses[1] <= losses[0] + 1e-12 and losses[2] <= losses[1] + 1e-12


def test_photometric_gradient():
    rng = np.random.default_rng(2)
    tgt, w1, w2 = (rng.uniform(0, 1, (1, 3, 4, 5)) for _ in range(3))
    m1 = T((rng.uniform(size=(1, 1, 4, 5)) > 0.2).astype(float))
    m2 = T(np.ones((1, 1, 4, 5)))
    errs = check_gradients(lambda t, a, b: photometric_loss(t, [(a, m1), (b, m2)]), [tgt, w1, w2])
    assert max(errs) < 1e-5


# --- smoothness --------------------------------------------------------------


def test_constant_depth_is_smooth():
    img = T(np.random.default_rng(3).uniform(0, 1, (1, 3, 5, 5)))
    assert smoothness_loss(T(np.full((1, 1, 5, 5), 4.0)), img).item() == 0.0


def test_unit_ramp_on_flat_image():
    xx = np.tile(np.arange(6.0), (4, 1)).reshape(1, 1, 4, 6)
    loss = smoothness_loss(T(xx), T(np.zeros((1, 3, 4, 6))))
    # x differences are all 1 with weight e^0; y differences are 0
    assert loss.item() == pytest.approx(1.0)


def test_ramp_on_steep_image_is_damped():
    xx = np.tile(np.arange(6.0), (4, 1)).reshape(1, 1, 4, 6)
    img = np.broadcast_to(10.0 * xx, (1, 3, 4, 6))
    loss = smoothness_loss(T(xx), T(img))
    assert loss.item() == pytest.approx(np.exp(-10.0), rel=1e-9)


@settings(max_examples=20)
@given(hnp.arrays(np.float64, (1, 1, 4, 5), elements=st.floats(0.1, 3)), st.floats(-5, 5))
def test_smoothness_ignores_constant_offset(d, c):
    img = T(np.random.default_rng(4).uniform(0, 1, (1, 3, 4, 5)))
    np.testing.assert_allclose(smoothness_loss(T(d + c), img).item(), smoothness_loss(T(d), img).item(), atol=1e-9)


def test_smoothness_gradient():
    rng = np.random.default_rng(5)
    # small steps keep every |difference| on one side of its kink
    errs = check_gradients(smoothness_loss, [rng.uniform(0, 1, (1, 1, 5, 6)), rng.uniform(0, 1, (1, 3, 5, 6))],
                           step=1e-6)
    assert max(errs) < 1e-5


# --- feature reconstruction ----------------------------------------------------


def test_identical_features_give_zero():
    f = T(np.random.default_rng(6).normal(size=(1, 16, 4, 4)))
    assert feature_recon_loss(f, [(f, ones_like(f))]).item() == pytest.approx(0.0, abs=1e-5)


def test_feature_distance_three_four_five():
    tgt = T(np.zeros((1, 2, 1, 1)))
    src = T(np.array([3.0, 4.0]).reshape(1, 2, 1, 1))
    assert feature_recon_loss(tgt, [(src, ones_like(src))]).item() == pytest.approx(5.0)


def test_feature_min_over_sources():
    tgt = T(np.zeros((1, 2, 1, 1)))
    a = T(np.array([3.0, 4.0]).reshape(1, 2, 1, 1))
    b = T(np.array([0.0, 2.0]).reshape(1, 2, 1, 1))
    assert feature_recon_loss(tgt, [(a, ones_like(a)), (b, ones_like(b))]).item() == pytest.approx(2.0)


def test_feature_gradient():
    rng = np.random.default_rng(7)
    m = T(np.ones((1, 1, 3, 3)))
    errs = check_gradients(lambda t, s: feature_recon_loss(t, [(s, m)]),
                           [rng.normal(size=(1, 4, 3, 3)), rng.normal(size=(1, 4, 3, 3))])
    assert max(errs) < 1e-6


# --- total -----------------------------------------------------------------


W = LossWeights(lambda1=1.0, lambda2=0.1, lambda3=0.05)


def test_total_of_zeros_is_zero():
    assert total_loss("lr", [ScaleTerms(0.0, 0.0, 0.0)] * 4, W).item() == 0.0


def test_total_lr_single_scale():
    assert total_loss("lr", [ScaleTerms(0.2, 0.5, 0.4)], W).item() == pytest.approx(0.27, abs=1e-7)


def test_total_hr_drops_feature_term():
    assert total_loss("hr", [ScaleTerms(0.2, 0.5, 123.0)], W).item() == pytest.approx(0.25, abs=1e-7)


def test_total_decays_smoothness_per_scale():
    terms = [ScaleTerms(0.0, 1.0)] * 3
    assert total_loss("hr", terms, W).item() == pytest.approx(0.1 * (1 + 0.5 + 0.25), abs=1e-7)


def test_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(alpha=1.5)
    with pytest.raises(ValueError):
        LossWeights(lambda2=-1)
    with pytest.raises(ValueError):
        total_loss("mid", [], W)
