import numpy as np
import pytest

from dualdepth import tensor_core as tc
from dualdepth.attention import SAConfig, assemble_input, sa_attention
from dualdepth.gradcheck import check_gradients
from dualdepth.networks import (ArchConfig, count_params, disparity_to_depth, hr_net_forward, init_hr_net,
                                init_lr_net, init_pose_net, init_sa_embedding, lr_net_forward, pose_net_forward,
                                poses_to_vecs)
from dualdepth.tensor_core import ShapeError, Tensor

DEFAULT = ArchConfig()
TINY = ArchConfig(lr_scale=0.125, hr_scale=0.125, pose_scale=0.0625)


def rng(seed=0):
    return np.random.default_rng(seed)


def image(h, w, n=1, seed=0):
    return Tensor(rng(seed).uniform(0, 1, (n, 3, h, w)))


def as64(params):
    return {k: Tensor(v.data, dtype=np.float64) for k, v in params.items()}


@pytest.fixture(scope="module")
def lr_params():
    return init_lr_net(DEFAULT, rng(0))


def test_lr_output_shapes(lr_params):
    out = lr_net_forward(image(64, 192), lr_params)
    assert [d.shape for d in out.disparities] == [(1, 1, 64, 192), (1, 1, 32, 96), (1, 1, 16, 48), (1, 1, 8, 24)]
    assert out.bottleneck.shape == (1, 512 // 4, 2, 6)
    assert out.decoder_feats16.shape == (1, 16, 64, 192)


def test_disparities_in_open_unit_interval(lr_params):
    out = lr_net_forward(image(64, 192, seed=3), lr_params)
    for d in out.disparities:
        assert d.data.min() > 0 and d.data.max() < 1


def test_lr_forward_deterministic(lr_params):
    a = lr_net_forward(image(64, 192), lr_params).disparities[0].data
    b = lr_net_forward(image(64, 192), lr_params).disparities[0].data
    assert a.tobytes() == b.tobytes()


def test_lr_rejects_indivisible_resolution(lr_params):
    with pytest.raises(ShapeError, match="divisible by 32"):
        lr_net_forward(image(48, 192), lr_params)


def test_hr_shapes_and_bottleneck_alignment(lr_params):
    lr_out = lr_net_forward(image(64, 192), lr_params)
    sa = init_sa_embedding(128 + 5, 64, rng(1))
    refined = sa_attention(assemble_input(lr_out.bottleneck, image(64, 192)), sa["sa.embed.w"], sa["sa.embed.b"],
                           SAConfig())
    assert refined.shape == (1, 64, 2, 6)
    hr = init_hr_net(DEFAULT, rng(2), 64)
    out = hr_net_forward(image(192, 576), refined, hr)
    assert out.bottleneck.shape[2:] == (6, 18)
    assert out.disparities[0].shape == (1, 1, 192, 576)


def test_hr_rejects_ratio_other_than_three():
    hr = init_hr_net(TINY, rng(2), 4)
    with pytest.raises(ShapeError, match="3x"):
        hr_net_forward(image(128, 384), Tensor(np.zeros((1, 4, 2, 6))), hr)


def test_hr_net_is_under_a_fifth_of_lr_net(lr_params):
    hr = init_hr_net(DEFAULT, rng(2), 64)
    assert count_params(hr) < 0.2 * count_params(lr_params)


def test_zero_final_pose_layer_gives_identity_motion():
    params = init_pose_net(DEFAULT, rng(3), zero_last=True)
    poses = pose_net_forward(tc.concat_channels([image(64, 192, seed=s) for s in range(3)]), params)
    assert len(poses) == 2
    for vec in poses_to_vecs(poses[0]) + poses_to_vecs(poses[1]):
        assert vec.t == (0.0, 0.0, 0.0) and vec.r == (0.0, 0.0, 0.0)


def test_pose_outputs_scaled_by_one_hundredth():
    params = init_pose_net(TINY, rng(4))
    frames = tc.concat_channels([image(64, 192, n=2, seed=s) for s in range(3)])
    poses = pose_net_forward(frames, params)
    x = frames
    i = 0
    while f"pconv{i}.w" in params:
        x = tc.elu(tc.conv2d(x, params[f"pconv{i}.w"], params[f"pconv{i}.b"], stride=2))
        i += 1
    raw = tc.mean(tc.conv2d(x, params["pose_out.w"], params["pose_out.b"]), axes=(2, 3)).data
    got = np.concatenate([p.data for p in poses], axis=1)
    np.testing.assert_allclose(got, 0.01 * raw, rtol=1e-6)


def test_depth_endpoints():
    depth, _ = disparity_to_depth(Tensor(np.ones((1, 1, 2, 2))), 0.1, 100)
    np.testing.assert_allclose(depth.data, 0.1, rtol=1e-6)
    depth, _ = disparity_to_depth(Tensor(np.zeros((1, 1, 2, 2))), 0.1, 100)
    np.testing.assert_allclose(depth.data, 100, rtol=1e-6)


def test_depth_within_range_and_norm_mean_one():
    disp = Tensor(rng(5).uniform(0, 1, (3, 1, 8, 8)))
    depth, norm = disparity_to_depth(disp)
    assert depth.data.min() >= 0.1 and depth.data.max() <= 100
    np.testing.assert_allclose(norm.data.mean(axis=(2, 3)), 1.0, rtol=1e-6)
    with pytest.raises(ValueError):
        disparity_to_depth(disp, 1.0, 0.5)


def _first_params(params, names):
    return [params[n].data.astype(np.float64) for n in names]


def test_lr_net_gradient_tiny():
    params = as64(init_lr_net(TINY, rng(6)))
    img = rng(7).uniform(0, 1, (1, 3, 32, 96))
    probe = ["enc0.a.w", "enc4.b.w", "dec0.fuse.w", "disp1.b", "feat16.w"]

    def f(x, *ws):
        p = dict(params)
        p.update({n: w for n, w in zip(probe, ws)})
        out = lr_net_forward(x, p)
        total = tc.mean(out.decoder_feats16)
        for d in out.disparities:
            total = tc.add(total, tc.mean(d))
        return total

    errs = check_gradients(f, [img] + _first_params(params, probe), max_entries=12)
    assert max(errs) < 1e-3


def test_hr_net_gradient_tiny():
    params = as64(init_hr_net(TINY, rng(8), 4))
    img = rng(9).uniform(0, 1, (1, 3, 96, 288))
    refined = rng(10).normal(size=(1, 4, 1, 3))
    probe = ["enc0.a.w", "dec4.up.w", "disp0.w"]

    def f(x, r, *ws):
        p = dict(params)
        p.update({n: w for n, w in zip(probe, ws)})
        return tc.mean(hr_net_forward(x, r, p).disparities[0])

    errs = check_gradients(f, [img, refined] + _first_params(params, probe), max_entries=8)
    assert max(errs) < 1e-3


def test_pose_net_gradient_tiny():
    params = as64(init_pose_net(TINY, rng(11)))
    frames = rng(12).uniform(0, 1, (1, 9, 32, 96))
    probe = ["pconv0.w", "pconv6.w", "pose_out.w"]

    def f(x, *ws):
        p = dict(params)
        p.update({n: w for n, w in zip(probe, ws)})
        a, b = pose_net_forward(x, p)
        return tc.add(tc.sum_(a), tc.sum_(tc.square(b)))

    errs = check_gradients(f, [frames] + _first_params(params, probe), max_entries=10)
    assert max(errs) < 1e-3


@pytest.mark.parametrize("gain", [1.0, 2.449])
def test_init_bound_is_gain_over_root_fan_in(gain):
    params = init_lr_net(ArchConfig(lr_scale=0.125, init_gain=gain), rng(13))
    for name, p in params.items():
        w = params[name[:-1] + "w"].data
        bound = gain * np.sqrt(1.0 / (w.shape[1] * w.shape[2] * w.shape[3]))
        assert np.abs(p.data).max() <= bound
        assert np.abs(p.data).max() > 0.5 * bound or p.data.size < 8, name


def test_init_gain_must_be_positive():
    with pytest.raises(ValueError, match="init_gain"):
        ArchConfig(init_gain=0)
