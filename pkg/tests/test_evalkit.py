import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from dualdepth.evalkit import (MetricReport, band_split, depth_metrics, evaluate_pair, format_kv, format_table,
                               mean_reports, median_align, pose_error, region_metrics, sobel_magnitude, tenengrad)
from dualdepth.geometry import PoseVec

from oracles import depth_metrics_loops, rotation_xyz, axis_angle, tenengrad_loops

FIELDS = ("abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3")


def random_pair(seed, shape=(16, 16)):
    rng = np.random.default_rng(seed)
    gt = rng.uniform(0.5, 80, shape)
    gt[rng.uniform(size=shape) < 0.1] = 0  # missing ground truth
    pred = gt * rng.uniform(0.6, 1.5, shape) + rng.uniform(0, 2, shape)
    return pred, gt


@pytest.mark.parametrize("median_scale", [False, True])
def test_metrics_match_loop_oracle(median_scale):
    for seed in range(100):
        pred, gt = random_pair(seed)
        got = depth_metrics(pred, gt, median_scale=median_scale).as_dict()
        want = depth_metrics_loops(pred.ravel().tolist(), gt.ravel().tolist(), median_scale=median_scale)
        for k in FIELDS:
            assert got[k] == pytest.approx(want[k], abs=1e-6), (seed, k)
        assert got["pixel_count"] == want["pixel_count"]


def test_masked_metrics_match_oracle():
    pred, gt = random_pair(7)
    mask = np.random.default_rng(8).uniform(size=gt.shape) < 0.5
    got = depth_metrics(pred, gt, mask).as_dict()
    want = depth_metrics_loops(pred.ravel().tolist(), gt.ravel().tolist(), mask.ravel().tolist())
    for k in FIELDS:
        assert got[k] == pytest.approx(want[k], abs=1e-6)


@pytest.mark.parametrize("k", [0.1, 1.0, 7.3])
def test_median_scaling_removes_global_scale(k):
    for seed in range(20):
        pred, gt = random_pair(seed)
        a = depth_metrics(pred, gt, median_scale=True).as_dict()
        b = depth_metrics(k * pred, gt, median_scale=True).as_dict()
        for name in FIELDS:
            assert b[name] == pytest.approx(a[name], abs=1e-6)


def test_doubled_depths_example():
    r = depth_metrics(np.array([[2.0, 4.0, 8.0]]), np.array([[1.0, 2.0, 4.0]]))
    assert r.abs_rel == pytest.approx(1.0)
    assert r.delta1 == 0.0 and r.delta2 == 0.0 and r.delta3 == 0.0
    assert r.rmse_log == pytest.approx(math.log(2))


def test_perfect_prediction():
    gt = np.random.default_rng(0).uniform(1, 50, (8, 8))
    r = depth_metrics(gt, gt)
    assert r.abs_rel == 0 and r.rmse == 0 and r.delta1 == 1


def test_prediction_clipped_to_cap():
    r = depth_metrics(np.array([[500.0]]), np.array([[50.0]]))
    assert r.abs_rel == pytest.approx(1.0)


def test_empty_mask_raises():
    with pytest.raises(ValueError, match="no pixels"):
        depth_metrics(np.ones((2, 2)), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        depth_metrics(np.ones((2, 2)), np.ones((2, 3)))


@settings(max_examples=30)
@given(hnp.arrays(np.float64, (4, 5), elements=st.floats(0.5, 90)),
       hnp.arrays(np.float64, (4, 5), elements=st.floats(0.5, 90)))
def test_metric_ranges(pred, gt):
    r = depth_metrics(pred, gt)
    assert r.abs_rel >= 0 and r.rmse >= 0 and r.rmse_log >= 0
    assert 0 <= r.delta1 <= r.delta2 <= r.delta3 <= 1


def test_band_split_partitions_valid_pixels():
    gt = np.array([[0.0, 5.0, 20.0, 20.5, 60.0]])
    near, far = band_split(gt, 20)
    assert near.tolist() == [[False, True, True, False, False]]
    assert far.tolist() == [[False, False, False, True, True]]


def test_region_metrics_and_errors():
    pred, gt = random_pair(3)
    gt[gt == 0] = 1.0
    region = np.zeros_like(gt, dtype=bool)
    region[:4] = True
    np.testing.assert_allclose(region_metrics(pred, gt, region).abs_rel,
                               depth_metrics(pred[:4], gt[:4]).abs_rel, rtol=1e-12)
    with pytest.raises(ValueError):
        region_metrics(pred, gt, np.zeros_like(region))


def test_evaluate_pair_shares_median_scale():
    pred, gt = random_pair(4)
    rows = evaluate_pair(pred, gt, median_scale=True, band=20.0)
    assert set(rows) == {"all", "near_le20", "far_gt20"}
    aligned = median_align(pred, gt)
    near, _ = band_split(gt, 20)
    assert rows["near_le20"].abs_rel == pytest.approx(depth_metrics(aligned, gt, near).abs_rel, rel=1e-12)
    assert rows["near_le20"].pixel_count + rows["far_gt20"].pixel_count == rows["all"].pixel_count


def test_mean_reports_is_pixel_weighted():
    a = MetricReport(1.0, 1.0, 3.0, 0.0, 0.0, 0.0, 0.0, 1)
    b = MetricReport(0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 3)
    m = mean_reports([a, b])
    assert m.abs_rel == pytest.approx(0.25)
    assert m.rmse == pytest.approx(math.sqrt(9 / 4))
    assert m.delta1 == pytest.approx(0.75)
    assert m.pixel_count == 4


def test_text_outputs():
    r = depth_metrics(np.array([[2.0, 4.0]]), np.array([[1.0, 2.0]]))
    kv = format_kv(r, "lr")
    assert "lr.abs_rel=1" in kv.splitlines()
    assert "lr.pixel_count=2" in kv.splitlines()
    table = format_table({"all": r})
    assert table.splitlines()[0].split()[:2] == ["region", "abs_rel"]


# --- Tenengrad --------------------------------------------------------------------


def test_constant_map_has_zero_tenengrad():
    assert tenengrad(np.full((9, 11), 3.7)) == 0.0


def test_step_edge_matches_loop_oracle():
    d = np.ones((6, 8))
    d[:, 4:] = 5.0
    # each of the 4 interior rows has two columns straddling the edge, |gx| = 4 * 4 = 16
    assert tenengrad(d) == pytest.approx(4 * 2 * 16.0)
    assert tenengrad(d) == pytest.approx(tenengrad_loops(d.tolist()), abs=1e-6)


def test_tenengrad_matches_oracle_on_random_maps():
    rng = np.random.default_rng(0)
    for _ in range(5):
        d = rng.uniform(0, 10, (7, 9))
        for t in (0.0, 5.0):
            assert tenengrad(d, t) == pytest.approx(tenengrad_loops(d.tolist(), t), abs=1e-6)


def test_sobel_output_is_interior_only():
    assert sobel_magnitude(np.zeros((5, 6))).shape == (3, 4)
    with pytest.raises(ValueError):
        sobel_magnitude(np.zeros((2, 3, 4)))


def test_threshold_drops_weak_edges():
    d = np.ones((5, 5))
    d[:, 3:] = 1.1
    assert tenengrad(d, t=1.0) == 0.0


# --- pose ---------------------------------------------------------------------


def test_pose_error_ten_degrees():
    a = PoseVec((1.0, 0.0, 0.0), (0.0, 0.0, 0.0))
    b = PoseVec((1.0, 0.0, 2.0), (0.0, math.radians(10), 0.0))
    dt, ang = pose_error(b, a)
    assert dt == pytest.approx(2.0)
    assert math.degrees(ang) == pytest.approx(10.0, abs=1e-9)


def test_pose_error_matches_trace_oracle():
    rng = np.random.default_rng(1)
    for _ in range(20):
        r1, r2 = rng.uniform(-0.5, 0.5, 3), rng.uniform(-0.5, 0.5, 3)
        R1 = np.array(rotation_xyz(*r1))
        R2 = np.array(rotation_xyz(*r2))
        want = axis_angle((R1 @ R2.T).tolist())
        _, got = pose_error(PoseVec(r=tuple(r1)), PoseVec(r=tuple(r2)))
        assert got == pytest.approx(want, abs=1e-6)
