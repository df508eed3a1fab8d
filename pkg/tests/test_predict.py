"""Predictors, kernel interpolant, Monte Carlo distances and test errors."""

import numpy as np
import pytest

from mci.errors import InvalidM, NoTarget
from mci.features import (
    DataSpec,
    FeatureSpec,
    RidgeTarget,
    kernel_matrix,
    sample_data,
    sample_weights,
)
from mci.predict import KernelPredictor, Predictor, kernel_interpolant, l2_distance, predict
from mci.predict import test_error as mse_vs_target

SPEC = FeatureSpec(activation="relu")


def _ds(d, seed=0):
    return DataSpec(d=d, target=RidgeTarget.random(d, seed))


class TestPredictor:
    def test_zero_coefficients(self):
        W = sample_weights(SPEC, 4, 10, seed=0)
        pred = Predictor(W=W, a=np.zeros(10), spec=SPEC)
        X = np.ones((5, 4))
        np.testing.assert_array_equal(pred.predict(X), np.zeros(5))

    def test_single_feature(self):
        # N = 1, a = N: prediction is exactly the mean feature of w_1.
        d = 3
        W = np.zeros((1, d))
        W[0, 0] = 1.0
        pred = Predictor(W=W, a=np.array([1.0]), spec=SPEC)
        x = np.array([[2.0, 0.0, 0.0]])
        assert pred.predict(x)[0] == pytest.approx(2.0)

    def test_linear_in_coefficients(self):
        rng = np.random.default_rng(1)
        W = sample_weights(SPEC, 5, 30, seed=1)
        a1, a2 = rng.standard_normal(30), rng.standard_normal(30)
        X = rng.standard_normal((20, 5))
        p1 = Predictor(W=W, a=a1, spec=SPEC).predict(X)
        p2 = Predictor(W=W, a=a2, spec=SPEC).predict(X)
        p12 = Predictor(W=W, a=a1 + a2, spec=SPEC).predict(X)
        np.testing.assert_allclose(p12, p1 + p2, atol=1e-12)

    def test_callable_predictors_supported(self):
        out = predict(lambda X: X[:, 0], np.arange(6.0).reshape(3, 2))
        np.testing.assert_array_equal(out, [0.0, 2.0, 4.0])


class TestKernelInterpolant:
    def test_identity_kernel_coeffs(self):
        spec = FeatureSpec(activation="identity", noise_gamma=1.0)
        from mci.features import Instance

        inst = Instance(X=np.zeros((4, 6)), y=np.array([1.0, -2.0, 0.5, 3.0]))
        oracle = kernel_matrix(spec, inst.X, method="latent_linear")  # K = I
        kp = kernel_interpolant(oracle, inst, spec)
        np.testing.assert_allclose(kp.coeffs, inst.y, atol=1e-12)

    def test_interpolates_training_rows_arc_cosine(self):
        ds = _ds(6)
        inst = sample_data(ds, 25, seed=2)
        oracle = kernel_matrix(SPEC, inst.X, method="arc_cosine")
        kp = kernel_interpolant(oracle, inst, SPEC)
        residual = np.linalg.norm(kp.predict(inst.X) - inst.y)
        assert residual <= 1e-8 * np.linalg.norm(inst.y)

    def test_interpolates_training_rows_latent(self):
        spec = FeatureSpec(activation="identity", noise_gamma=1.0)
        rng = np.random.default_rng(3)
        from mci.features import Instance

        X = rng.standard_normal((30, 10))
        inst = Instance(X=X, y=rng.standard_normal(30))
        oracle = kernel_matrix(spec, X, method="latent_linear")
        kp = kernel_interpolant(oracle, inst, spec)
        residual = np.linalg.norm(kp.predict(X) - inst.y)
        assert residual <= 1e-8 * np.linalg.norm(inst.y)


class TestL2Distance:
    def test_identical_predictors(self):
        W = sample_weights(SPEC, 4, 10, seed=4)
        pred = Predictor(W=W, a=np.ones(10), spec=SPEC)
        est, se = l2_distance(pred, pred, _ds(4), 500, seed=0)
        assert est == 0.0 and se == 0.0

    def test_linear_functional_norm(self):
        # ||<c, .>||_{L2} = ||c|| for isotropic x (E x x^T = I on the sphere).
        d = 10
        rng = np.random.default_rng(5)
        c = rng.standard_normal(d)
        est, se = l2_distance(lambda X: np.zeros(len(X)), lambda X: X @ c, _ds(d), 50_000, seed=6)
        assert abs(est - np.linalg.norm(c)) <= 3 * se + 1e-12

    def test_seed_consistency(self):
        d = 6
        c = np.ones(d)
        f = lambda X: X @ c  # noqa: E731
        g = lambda X: np.zeros(len(X))  # noqa: E731
        e1, s1 = l2_distance(f, g, _ds(d), 40_000, seed=1)
        e2, s2 = l2_distance(f, g, _ds(d), 40_000, seed=2)
        assert abs(e1 - e2) <= 6 * max(s1, s2)

    def test_triangle_inequality(self):
        d = 5
        rng = np.random.default_rng(7)
        preds = [
            Predictor(W=sample_weights(SPEC, d, 20, seed=k), a=rng.standard_normal(20), spec=SPEC)
            for k in range(3)
        ]
        ds = _ds(d)
        dab, sab = l2_distance(preds[0], preds[1], ds, 20_000, seed=8)
        dbc, sbc = l2_distance(preds[1], preds[2], ds, 20_000, seed=8)
        dac, sac = l2_distance(preds[0], preds[2], ds, 20_000, seed=8)
        assert dac <= dab + dbc + 3 * (sab + sbc + sac)

    def test_invalid_m(self):
        with pytest.raises(InvalidM):
            l2_distance(lambda X: X[:, 0], lambda X: X[:, 0], _ds(3), 10, seed=0)


class TestTestError:
    def test_exact_target_zero_error(self):
        d = 8
        ds = _ds(d, seed=9)
        assert mse_vs_target(ds.target, ds, 5_000, seed=1) == 0.0

    def test_zero_predictor_error_is_half(self):
        # E[relu(<w*, x>)^2] = E[g^2 1{g>0}] = 1/2 exactly by symmetry of g.
        d = 30
        ds = _ds(d, seed=10)
        err = mse_vs_target(lambda X: np.zeros(len(X)), ds, 200_000, seed=2)
        assert err == pytest.approx(0.5, abs=0.02)

    def test_monte_carlo_scale(self):
        # Spread across seeds shrinks like 1/sqrt(M).
        d = 6
        ds = _ds(d, seed=11)
        f = lambda X: np.zeros(len(X))  # noqa: E731
        spreads = []
        for M in (1_000, 100_000):
            vals = [mse_vs_target(f, ds, M, seed=s) for s in range(8)]
            spreads.append(np.std(vals))
        assert spreads[1] < spreads[0]

    def test_no_target(self):
        ds = DataSpec(d=4, target=None)
        with pytest.raises(NoTarget):
            mse_vs_target(lambda X: X[:, 0], ds, 1_000, seed=0)


class TestKernelPredictorType:
    def test_fields(self):
        ds = _ds(5)
        inst = sample_data(ds, 10, seed=12)
        oracle = kernel_matrix(SPEC, inst.X, method="arc_cosine")
        kp = kernel_interpolant(oracle, inst, SPEC)
        assert isinstance(kp, KernelPredictor)
        assert kp.coeffs.shape == (10,)
        assert kp.kernel is oracle
