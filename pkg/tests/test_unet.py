import numpy as np
import pytest
from scipy.signal import correlate2d

from patk import ConfigError, UNetConfig
from patk.dipnet.unet import (_conv_fwd, _pool_bwd, _pool_fwd, parameter_count,
                              unet_forward, unet_init, unet_vjp)

TINY = dict(channels=(2, 4), init_seed=3)


def perturbed_params(cfg, shape=(8, 8), scale=0.01, seed=7):
    # move off the init point: with zero biases entire head-input windows can
    # be ReLU-dead, putting pre-activations exactly on the kink
    params = unet_init(cfg, shape)
    rng = np.random.default_rng(seed)
    for v in params.values():
        v += scale * rng.standard_normal(v.shape)
    return params


class TestConfig:
    def test_defaults(self):
        cfg = UNetConfig()
        assert cfg.channels == (32, 64, 128, 256)
        assert cfg.n_pool == 3

    @pytest.mark.parametrize("kw", [
        dict(channels=(8,)), dict(channels=(8, 8)), dict(channels=(16, 8)),
        dict(conv_kernel=5), dict(pool=3), dict(head="tanh"), dict(norm_eps=0.0),
    ])
    def test_validation(self, kw):
        with pytest.raises(ConfigError):
            UNetConfig(**kw)


class TestParameters:
    def test_shapes_for_tiny_net(self):
        params = unet_init(UNetConfig(**TINY), (8, 8))
        want = {
            "enc0_conv1_w": (2, 1, 3, 3), "enc0_conv2_w": (2, 2, 3, 3),
            "enc1_conv1_w": (4, 2, 3, 3), "enc1_conv2_w": (4, 4, 3, 3),
            "up0_w": (4, 2, 2, 2), "up0_b": (2,),
            "dec0_conv1_w": (2, 4, 3, 3), "dec0_conv2_w": (2, 2, 3, 3),
            "head_w": (1, 2, 3, 3), "head_b": (1,),
        }
        for name, shape in want.items():
            assert params[name].shape == shape
        for prefix in ("enc0", "enc1", "dec0"):
            for i in (1, 2):
                assert params[f"{prefix}_conv{i}_b"].shape == (
                    params[f"{prefix}_conv{i}_w"].shape[0],)
                assert params[f"{prefix}_norm{i}_gamma"].shape == \
                    params[f"{prefix}_norm{i}_beta"].shape

    def test_count(self):
        assert parameter_count(UNetConfig(**TINY)) == 479
        assert parameter_count(UNetConfig(channels=(2, 4),
                                          head="conv1x1_nobias_linear")) == 462

    def test_count_matches_init(self):
        cfg = UNetConfig(channels=(2, 4, 8))
        params = unet_init(cfg, (16, 16))
        assert parameter_count(cfg) == sum(v.size for v in params.values())

    def test_init_values(self):
        params = unet_init(UNetConfig(**TINY), (8, 8))
        assert np.all(params["enc0_norm1_gamma"] == 1.0)
        assert np.all(params["enc0_conv1_b"] == 0.0)
        assert np.all(params["head_b"] == 0.0)
        again = unet_init(UNetConfig(**TINY), (8, 8))
        for name in params:
            np.testing.assert_array_equal(params[name], again[name])
        other = unet_init(UNetConfig(channels=(2, 4), init_seed=4), (8, 8))
        assert not np.array_equal(params["enc0_conv1_w"], other["enc0_conv1_w"])

    def test_divisibility_checked(self):
        with pytest.raises(ConfigError):
            unet_init(UNetConfig(channels=(2, 4, 8)), (10, 12))


class TestConvPrimitive:
    def test_matches_scipy_correlation(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((1, 9, 11))
        w = rng.standard_normal((1, 1, 3, 3))
        b = rng.standard_normal(1)
        got = _conv_fwd(x, w, b)
        want = correlate2d(x[0], w[0, 0], mode="same", boundary="fill") + b[0]
        np.testing.assert_allclose(got[0], want, atol=1e-13)

    def test_multichannel_sums_inputs(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((3, 6, 6))
        w = rng.standard_normal((2, 3, 3, 3))
        got = _conv_fwd(x, w, None)
        want = np.stack([
            sum(correlate2d(x[c], w[o, c], mode="same") for c in range(3))
            for o in range(2)])
        np.testing.assert_allclose(got, want, atol=1e-13)


class TestPooling:
    def test_first_max_wins_on_ties(self):
        x = np.array([[[1.0, 1.0], [1.0, 1.0]]])
        out, ctx = _pool_fwd(x)
        assert out[0, 0, 0] == 1.0
        back = _pool_bwd(np.array([[[5.0]]]), ctx)
        np.testing.assert_array_equal(back[0], [[5.0, 0.0], [0.0, 0.0]])

    def test_routes_gradient_to_argmax(self):
        x = np.array([[[0.0, 2.0], [9.0, 1.0]]])
        out, ctx = _pool_fwd(x)
        assert out[0, 0, 0] == 9.0
        back = _pool_bwd(np.array([[[3.0]]]), ctx)
        np.testing.assert_array_equal(back[0], [[0.0, 0.0], [3.0, 0.0]])

    def test_odd_shape_rejected(self):
        with pytest.raises(ConfigError):
            _pool_fwd(np.zeros((1, 5, 4)))


class TestForward:
    def test_shape_preserved(self):
        cfg = UNetConfig(**TINY)
        z = np.random.default_rng(0).standard_normal((16, 8))
        assert unet_forward(unet_init(cfg, z.shape), cfg, z).shape == (16, 8)

    def test_relu_head_nonnegative(self):
        cfg = UNetConfig(**TINY)
        z = np.random.default_rng(1).standard_normal((8, 8))
        out = unet_forward(perturbed_params(cfg), cfg, z)
        assert np.all(out >= 0.0)

    def test_leaky_head_scales_linear_head(self):
        # identical parameter dicts are valid for both 1x1 no-bias heads, so
        # the leaky output must equal the slope-scaled linear output
        lin = UNetConfig(channels=(2, 4), head="conv1x1_nobias_linear", init_seed=3)
        lk = UNetConfig(channels=(2, 4), head="conv1x1_nobias_leakyrelu", init_seed=3)
        params = perturbed_params(lin)
        # mixed-sign head weights, else non-negative features never go negative
        params["head_w"][:] = np.array([1.2, -0.9]).reshape(1, 2, 1, 1)
        z = np.random.default_rng(2).standard_normal((8, 8))
        out_lin = unet_forward(params, lin, z)
        out_lk = unet_forward(params, lk, z)
        np.testing.assert_array_equal(out_lk, np.where(out_lin > 0, out_lin, 0.125 * out_lin))
        assert out_lin.min() < 0.0  # the comparison actually exercises the kink

    def test_conv_bias_before_norm_is_inert(self):
        cfg = UNetConfig(**TINY)
        z = np.random.default_rng(3).standard_normal((8, 8))
        params = perturbed_params(cfg)
        out = unet_forward(params, cfg, z)
        params["enc0_conv1_b"] += 3.0  # removed again by the per-channel norm
        out2 = unet_forward(params, cfg, z)
        np.testing.assert_allclose(out2, out, atol=1e-10)

    def test_input_validation(self):
        cfg = UNetConfig(**TINY)
        params = unet_init(cfg, (8, 8))
        with pytest.raises(ConfigError):
            unet_forward(params, cfg, np.zeros((8, 8, 1)))
        with pytest.raises(ConfigError):
            unet_forward(params, cfg, np.zeros((9, 8)))


class TestVjp:
    def test_matches_finite_differences(self):
        cfg = UNetConfig(**TINY)
        rng = np.random.default_rng(0)
        z = rng.standard_normal((8, 8))
        u = rng.standard_normal((8, 8))
        params = perturbed_params(cfg)
        grads, dz = unet_vjp(params, cfg, z, u)
        assert set(grads) == set(params)
        gmax = max(np.abs(g).max() for g in grads.values())
        worst = 0.0
        for name, p in params.items():
            it = np.nditer(p, flags=["multi_index"])
            for _ in it:
                ix = it.multi_index
                h = 1e-6 * max(1.0, abs(p[ix]))
                old = p[ix]
                p[ix] = old + h
                lp = float(np.vdot(unet_forward(params, cfg, z), u))
                p[ix] = old - h
                lm = float(np.vdot(unet_forward(params, cfg, z), u))
                p[ix] = old
                worst = max(worst, abs((lp - lm) / (2 * h) - grads[name][ix]))
        assert worst <= 1e-5 * gmax

        dz_fd = np.zeros_like(z)
        for i in range(8):
            for j in range(8):
                h = 1e-6 * max(1.0, abs(z[i, j]))
                old = z[i, j]
                z[i, j] = old + h
                lp = float(np.vdot(unet_forward(params, cfg, z), u))
                z[i, j] = old - h
                lm = float(np.vdot(unet_forward(params, cfg, z), u))
                z[i, j] = old
                dz_fd[i, j] = (lp - lm) / (2 * h)
        assert np.abs(dz_fd - dz).max() <= 1e-5 * np.abs(dz).max()

    def test_inert_bias_gradient_is_zero(self):
        cfg = UNetConfig(**TINY)
        rng = np.random.default_rng(4)
        z = rng.standard_normal((8, 8))
        params = perturbed_params(cfg)
        grads, _ = unet_vjp(params, cfg, z, rng.standard_normal((8, 8)))
        gmax = max(np.abs(g).max() for g in grads.values())
        for prefix in ("enc0", "enc1", "dec0"):
            for i in (1, 2):
                assert np.abs(grads[f"{prefix}_conv{i}_b"]).max() <= 1e-12 * gmax

    def test_linearity_in_upstream(self):
        cfg = UNetConfig(**TINY)
        rng = np.random.default_rng(5)
        z = rng.standard_normal((8, 8))
        params = perturbed_params(cfg)
        u1, u2 = rng.standard_normal((2, 8, 8))
        g1, d1 = unet_vjp(params, cfg, z, u1)
        g2, d2 = unet_vjp(params, cfg, z, u2)
        g12, d12 = unet_vjp(params, cfg, z, 2.0 * u1 - 0.5 * u2)
        for name in g1:
            np.testing.assert_allclose(g12[name], 2.0 * g1[name] - 0.5 * g2[name],
                                       atol=1e-10)
        np.testing.assert_allclose(d12, 2.0 * d1 - 0.5 * d2, atol=1e-10)

    def test_upstream_shape_checked(self):
        cfg = UNetConfig(**TINY)
        params = unet_init(cfg, (8, 8))
        with pytest.raises(ConfigError):
            unet_vjp(params, cfg, np.zeros((8, 8)), np.zeros((4, 4)))
