import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cascadeopt import presets
from cascadeopt.cascade_eval import CascadeConfig
from cascadeopt.errors import NumericalError
from cascadeopt.gp import (
    KernelParams,
    _neg_lml_and_grad,
    cholesky_with_jitter,
    condition,
    encode_config,
    fit,
    kernel_matrix,
)
from cascadeopt.profile_store import DesignSpace, HyperParams


def _dense_kernel(X1, X2, p):
    """Matern-5/2 / squared-exponential written element by element."""
    out = np.empty((len(X1), len(X2)))
    for i, a in enumerate(X1):
        for j, b in enumerate(X2):
            r = math.sqrt(sum(((x - y) / l) ** 2 for x, y, l in zip(a, b, p.length_scales)))
            if p.family == "se":
                out[i, j] = p.signal_variance * math.exp(-0.5 * r * r)
            else:
                out[i, j] = p.signal_variance * (1 + math.sqrt(5) * r + 5 * r * r / 3) * math.exp(-math.sqrt(5) * r)
    return out


def _dense_lml(X, y, p):
    K = _dense_kernel(X, X, p) + p.noise_variance * np.eye(len(X))
    sign, logdet = np.linalg.slogdet(K)
    assert sign > 0
    return float(-0.5 * y @ np.linalg.inv(K) @ y - 0.5 * logdet - 0.5 * len(X) * math.log(2 * math.pi))


def _dense_posterior(X, y, p, Xs):
    K = _dense_kernel(X, X, p) + p.noise_variance * np.eye(len(X))
    Ks = _dense_kernel(Xs, X, p)
    Kinv = np.linalg.inv(K)
    mean = Ks @ Kinv @ y
    var = p.signal_variance - np.einsum("ij,jk,ik->i", Ks, Kinv, Ks)
    return mean, var


def _toy(n=20, d=3, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.random((n, d))
    y = np.sin(3 * X[:, 0]) + (X[:, 1:] ** 2).sum(axis=1)
    return X, y


class TestEncoding:
    def test_normalization(self):
        space = DesignSpace((presets.small_network_slot(maps_step=16), presets.big_network_slot()))
        names = space.slots[0].names
        big = space.slots[1].fixed
        lo = CascadeConfig((HyperParams(names, (32, 2, 500)), big), (0.37,))
        mid = CascadeConfig((HyperParams(names, (240, 2, 500)), big), (0.0,))
        assert encode_config(lo, space).tolist() == [0.0, 0.0, 0.0, 0.37]
        assert encode_config(mid, space)[0] == 0.5

    def test_rejects_outside(self):
        space = presets.benchmark_space()
        names = space.slots[0].names
        bad = CascadeConfig((HyperParams(names, (33, 2, 500)), space.slots[1].fixed), (0.1,))
        with pytest.raises(ValueError):
            encode_config(bad, space)


class TestFit:
    def test_interpolates_at_tiny_noise(self):
        X, y = _toy()
        model = fit(X, y, noise_variance=1e-8)
        mean, _ = model.predict_many(X)
        assert np.max(np.abs(mean - y)) < 1e-6

    @pytest.mark.parametrize("family", ["matern52", "se"])
    def test_lml_matches_dense_inverse(self, family):
        X, y = _toy(5, 2, seed=3)
        p = KernelParams(1.3, (0.4, 0.9), 1e-3, family)
        model = condition(X, y, p)
        assert abs(model.log_marginal_likelihood() - _dense_lml(X, y, p)) < 1e-8

    def test_gradient_matches_finite_difference(self):
        from scipy.optimize import check_grad

        X, y = _toy(12, 2, seed=4)
        diffs2 = (X.T[:, :, None] - X.T[:, None, :]) ** 2
        ys = (y - y.mean()) / y.std()
        for family in ("matern52", "se"):
            v = np.array([0.2, -0.7, -0.3, math.log(1e-2)])
            f = lambda v: _neg_lml_and_grad(v, diffs2, ys, family, None)[0]
            g = lambda v: _neg_lml_and_grad(v, diffs2, ys, family, None)[1]
            assert check_grad(f, g, v) < 1e-4

    def test_fitted_length_scales_locally_optimal(self):
        X, y = _toy(20, 2, seed=5)
        model = fit(X, y, restarts=3)
        base = model.log_marginal_likelihood()
        for k, ls in enumerate(model.params.length_scales):
            if not 1.2e-2 < ls < 10.0 / 1.2:
                continue  # pinned at a box edge
            for scale in (0.8, 1.2):
                ls2 = list(model.params.length_scales)
                ls2[k] = ls * scale
                p = KernelParams(model.params.signal_variance, tuple(ls2), model.params.noise_variance)
                assert condition(X, model.y, p).log_marginal_likelihood() <= base + 1e-9

    def test_prior_reversion(self):
        X, y = _toy(15, 2, seed=6)
        model = fit(X, y)
        far = np.full((1, 2), 10.0 * max(model.params.length_scales) + 2.0)
        m, v = model.predict(far[0])
        assert abs(m - model.y_mean) <= 0.01 * model.y_scale
        assert abs(v - model.prior_variance) <= 0.01 * model.prior_variance

    def test_sin_against_dense_oracle(self):
        X = np.linspace(0, 2 * math.pi, 10)[:, None]
        y = np.sin(X[:, 0])
        model = fit(X, y, family="se", noise_variance=1e-6)
        mids = (X[:-1] + X[1:]) / 2
        mean, var = model.predict_many(mids)
        assert np.max(np.abs(mean - np.sin(mids[:, 0]))) < 0.05
        ys = (y - model.y_mean) / model.y_scale
        dm, dv = _dense_posterior(X, ys, model.params, mids)
        assert np.allclose(mean, dm * model.y_scale + model.y_mean, atol=1e-8)
        assert np.allclose(var, np.maximum(dv, 0) * model.y_scale**2, atol=1e-8)

    def test_constant_targets(self):
        X, _ = _toy(8, 2, seed=7)
        model = fit(X, np.full(8, 4.25))
        m, v = model.predict_many(np.random.default_rng(0).random((30, 2)))
        assert np.allclose(m, 4.25, atol=1e-12)
        assert np.all(v <= model.prior_variance + 1e-12)

    def test_deterministic(self):
        X, y = _toy()
        a, b = fit(X, y, seed=4), fit(X, y, seed=4)
        assert a.params == b.params

    def test_standardization_invariance(self):
        X, y = _toy(12, 2, seed=8)
        a, b = fit(X, y, seed=1), fit(X, 10 * y, seed=1)
        assert a.log_marginal_likelihood() == pytest.approx(b.log_marginal_likelihood(), abs=1e-9)

    def test_duplicate_points_finite(self):
        X = np.array([[0.3, 0.3], [0.3, 0.3]])
        model = fit(X, np.array([1.0, 1.2]))
        assert math.isfinite(model.log_marginal_likelihood())

    def test_pre_conditions(self):
        with pytest.raises(ValueError):
            fit(np.zeros((1, 2)), np.zeros(1))
        with pytest.raises(ValueError):
            fit(np.zeros((3, 2)), np.array([1.0, np.nan, 2.0]))

    def test_dimension_check(self):
        X, y = _toy(6, 3)
        with pytest.raises(ValueError):
            fit(X, y).predict([0.1, 0.2])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_variance_non_negative(seed):
    rng = np.random.default_rng(seed)
    X = rng.random((12, 2))
    y = rng.normal(size=12)
    model = fit(X, y, restarts=1, seed=seed)
    _, var = model.predict_many(np.vstack([X, rng.random((200, 2))]))
    assert np.all(var >= 0.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_permutation_symmetry(seed):
    rng = np.random.default_rng(seed)
    X = rng.random((10, 3))
    y = rng.normal(size=10)
    p = KernelParams(1.0, (0.3, 0.5, 0.8), 1e-4)
    perm = rng.permutation(10)
    Xs = rng.random((20, 3))
    a = condition(X, y, p).predict_many(Xs)
    b = condition(X[perm], y[perm], p).predict_many(Xs)
    assert np.allclose(a[0], b[0], atol=1e-10, rtol=0) and np.allclose(a[1], b[1], atol=1e-10, rtol=0)


def test_kernel_matches_dense():
    rng = np.random.default_rng(1)
    X1, X2 = rng.random((4, 2)), rng.random((5, 2))
    for family in ("matern52", "se"):
        p = KernelParams(2.0, (0.3, 0.7), 0.0, family)
        assert np.allclose(kernel_matrix(X1, X2, p), _dense_kernel(X1, X2, p), atol=1e-14)


def test_jitter_escalation():
    ones = np.ones((3, 3))
    L, jitter = cholesky_with_jitter(ones)
    assert jitter > 0 and np.allclose(L @ L.T, ones + jitter * np.eye(3))
    with pytest.raises(NumericalError):
        cholesky_with_jitter(np.diag([1.0, -1.0]))
