import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import minimize_scalar

from patk import ConfigError
from patk.variational import (grad, neg_div, project_dual_ball, prox_l2_dual,
                              prox_primal, tv, tv_smoothed, tv_smoothed_grad)

finite = st.floats(-100.0, 100.0, allow_nan=False, allow_infinity=False)


def images(min_side=2, max_side=7):
    return st.integers(min_side, max_side).flatmap(
        lambda n: st.integers(min_side, max_side).flatmap(
            lambda m: arrays(np.float64, (n, m), elements=finite)))


def fields(min_side=2, max_side=7):
    return st.integers(min_side, max_side).flatmap(
        lambda n: st.integers(min_side, max_side).flatmap(
            lambda m: arrays(np.float64, (2, n, m), elements=finite)))


class TestGrad:
    def test_forward_differences_neumann(self):
        f = np.array([[0.0, 1.0, 3.0],
                      [2.0, 2.0, 2.0]])
        v = grad(f)
        np.testing.assert_array_equal(v[0], [[2.0, 1.0, -1.0], [0.0, 0.0, 0.0]])
        np.testing.assert_array_equal(v[1], [[1.0, 2.0, 0.0], [0.0, 0.0, 0.0]])

    @given(images())
    def test_constant_rows_cols_boundary(self, f):
        v = grad(f)
        assert np.all(v[0, -1, :] == 0.0)
        assert np.all(v[1, :, -1] == 0.0)

    @given(images(), fields())
    @settings(max_examples=50)
    def test_negdiv_is_exact_transpose(self, f, v):
        if v.shape[1:] != f.shape:
            v = np.zeros((2,) + f.shape)
            v[:, : f.shape[0], : f.shape[1]] = 1.0
        gf, dv = grad(f), neg_div(v)
        lhs = float(np.sum(gf * v))
        rhs = float(np.sum(f * dv))
        # scale by the factor norms, not the (possibly fully cancelled)
        # products, so constant inputs don't demand impossible cancellation
        scale = max(np.linalg.norm(gf) * np.linalg.norm(v)
                    + np.linalg.norm(f) * np.linalg.norm(dv), 1.0)
        assert abs(lhs - rhs) <= 1e-12 * scale

    def test_negdiv_transpose_dense(self):
        # assemble both operators as dense matrices and compare exactly
        shape = (4, 5)
        n = shape[0] * shape[1]
        gmat = np.zeros((2 * n, n))
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1.0
            gmat[:, i] = grad(e.reshape(shape)).ravel()
        dmat = np.zeros((n, 2 * n))
        for i in range(2 * n):
            e = np.zeros(2 * n)
            e[i] = 1.0
            dmat[:, i] = neg_div(e.reshape((2,) + shape)).ravel()
        np.testing.assert_array_equal(dmat, gmat.T)


class TestTv:
    def test_hand_value(self):
        f = np.array([[0.0, 1.0], [0.0, 1.0]])
        assert tv(f) == 2.0

    @given(images(), st.floats(-5, 5, allow_nan=False), finite)
    @settings(max_examples=50)
    def test_homogeneity_and_shift_invariance(self, f, c, b):
        t = tv(f)
        assert np.isclose(tv(c * f), abs(c) * t, rtol=1e-10, atol=1e-8)
        assert np.isclose(tv(f + b), t, rtol=1e-10, atol=1e-8)

    def test_smoothed_bounds_and_constant(self):
        rng = np.random.default_rng(3)
        f = rng.standard_normal((6, 6))
        eps = 1e-3
        ts = tv_smoothed(f, eps)
        assert tv(f) - f.size * eps <= ts <= tv(f) + 1e-12
        assert tv_smoothed(np.full((5, 5), 2.7), eps) == 0.0

    def test_smoothed_requires_positive_eps(self):
        with pytest.raises(ConfigError):
            tv_smoothed(np.zeros((4, 4)), 0.0)
        with pytest.raises(ConfigError):
            tv_smoothed_grad(np.zeros((4, 4)), -1.0)

    def test_smoothed_grad_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        f = rng.standard_normal((5, 6))
        eps = 1e-2
        an = tv_smoothed_grad(f, eps)
        h = 1e-6
        for idx in [(0, 0), (2, 3), (4, 5), (1, 4)]:
            fp = f.copy()
            fp[idx] += h
            fm = f.copy()
            fm[idx] -= h
            fd = (tv_smoothed(fp, eps) - tv_smoothed(fm, eps)) / (2 * h)
            assert abs(fd - an[idx]) <= 1e-6 * max(1.0, abs(fd))


class TestDualProxes:
    def test_l2_dual_closed_form_matches_minimizer(self):
        # prox of sigma * F* where F*(y) = 0.5||y||^2 + <y, g>; the defining
        # minimization is solved per component by an independent optimizer
        rng = np.random.default_rng(0)
        y = rng.standard_normal(6)
        g = rng.standard_normal(6)
        sigma = 0.7
        got = prox_l2_dual(y, sigma, g)
        for i in range(6):
            res = minimize_scalar(
                lambda t: 0.5 * (t - y[i]) ** 2 + sigma * (0.5 * t * t + t * g[i]),
                bounds=(-20, 20), method="bounded",
                options={"xatol": 1e-12})
            assert abs(got[i] - res.x) <= 1e-8

    @given(fields(), st.floats(0.0, 10.0, allow_nan=False))
    @settings(max_examples=50)
    def test_ball_projection_feasible(self, v, alpha):
        p = project_dual_ball(v, alpha)
        # hypot: naive sqrt-of-squares under/overflows at extreme magnitudes
        n = np.hypot(p[0], p[1])
        assert np.all(n <= alpha * (1 + 1e-12) + 1e-300)

    def test_ball_projection_identity_inside(self):
        v = np.zeros((2, 3, 3))
        v[0, 1, 1] = 0.3
        v[1, 1, 1] = 0.4  # norm 0.5 < 1
        np.testing.assert_array_equal(project_dual_ball(v, 1.0), v)

    def test_ball_projection_scales_to_boundary(self):
        v = np.zeros((2, 1, 1))
        v[0, 0, 0] = 3.0
        v[1, 0, 0] = 4.0
        p = project_dual_ball(v, 2.5)
        np.testing.assert_allclose(p[:, 0, 0], [1.5, 2.0], rtol=1e-14)

    def test_ball_radius_zero(self):
        v = np.ones((2, 2, 2))
        np.testing.assert_array_equal(project_dual_ball(v, 0.0), np.zeros_like(v))
        with pytest.raises(ConfigError):
            project_dual_ball(v, -1.0)


class TestPrimalProx:
    def test_nonneg_is_clipping(self):
        f = np.array([[-1.0, 0.5], [0.0, -2.0]])
        np.testing.assert_array_equal(prox_primal(f, 0.3), np.maximum(f, 0.0))

    def test_mean_penalty_matches_scalar_minimizer(self):
        # G(u) = mu*(mean(u) - m0)^2 depends on u only through its mean, so
        # prox(f) - f is a constant shift; search that scalar independently
        rng = np.random.default_rng(5)
        f = rng.standard_normal((4, 6))
        for tau, mu, m0 in [(0.5, 1.0, 0.0), (2.0, 3.5, 0.2), (0.1, 0.0, 1.0)]:
            got = prox_primal(f, tau, "mean_penalty", mu=mu, m0=m0)
            shift = got - f
            assert np.ptp(shift) <= 1e-12  # uniform shift
            n = f.size

            def obj(s):
                u = f + s
                return tau * mu * (u.mean() - m0) ** 2 + 0.5 * n * s * s

            res = minimize_scalar(obj, bounds=(-10, 10), method="bounded",
                                  options={"xatol": 1e-13})
            assert abs(float(shift.flat[0]) - res.x) <= 1e-9

    @given(images(3, 6), images(3, 6))
    @settings(max_examples=40)
    def test_prox_nonexpansive(self, a, b):
        if a.shape != b.shape:
            b = np.resize(b, a.shape)
        d = float(np.linalg.norm(a - b))
        for kwargs in [dict(variant="nonneg"),
                       dict(variant="mean_penalty", mu=2.0, m0=0.3)]:
            pa = prox_primal(a, 0.7, **kwargs)
            pb = prox_primal(b, 0.7, **kwargs)
            assert float(np.linalg.norm(pa - pb)) <= d * (1 + 1e-12) + 1e-12

    def test_validation(self):
        with pytest.raises(ConfigError):
            prox_primal(np.zeros((2, 2)), 0.0)
        with pytest.raises(ConfigError):
            prox_primal(np.zeros((2, 2)), 1.0, "unknown")
        with pytest.raises(ConfigError):
            prox_primal(np.zeros((2, 2)), 1.0, "mean_penalty", mu=-1.0)
