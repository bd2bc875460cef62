import math

import numpy as np
import pytest

from pabfit.domain import Contaminant, ObservationSeries, Sample
from pabfit.errors import DimensionMismatch, InvalidInput
from pabfit.gp import (
    DEFAULT_EPSILON,
    GpHyperParams,
    build_inputs,
    gp_fit,
    gp_loo_sse,
    gp_nlml,
    gp_optimize_hyperparams,
    gp_predict,
    kernel,
    kernel_matrix,
    mb_default_hyperparams,
    pb_default_hyperparams,
)
from pabfit.numeric import DescentConfig


def brute_force_posterior(hp, x, y, xq):
    """Explicit-inverse reference implementation of the posterior."""
    x = np.atleast_2d(x)
    xq = np.atleast_2d(xq)
    k_train = kernel_matrix(hp, x) + hp.epsilon * np.eye(len(y))
    k_cross = kernel_matrix(hp, xq, x)
    k_inv = np.linalg.inv(k_train)
    mean = k_cross @ k_inv @ np.asarray(y)
    var = hp.v - np.einsum("ij,ij->i", k_cross @ k_inv, k_cross)
    return mean, np.maximum(var, 0.0)


class TestKernel:
    def test_zero_distance_is_exactly_v(self):
        hp = GpHyperParams(v=0.3852, w=(0.7839, 2.8869, 2.859e-9))
        x = np.array([0.5, 7.0, 3.0])
        assert kernel(hp, x, x) == 0.3852

    def test_unit_example(self):
        hp = GpHyperParams(v=1.0, w=(1.0,))
        assert kernel(hp, [0.0], [1.0]) == pytest.approx(math.exp(-1.0), rel=1e-15)

    def test_symmetry_bit_for_bit(self):
        rng = np.random.default_rng(31)
        hp = GpHyperParams(v=0.7, w=(0.9, 2.1, 0.3))
        for _ in range(50):
            a = rng.standard_normal(3)
            b = rng.standard_normal(3)
            assert kernel(hp, a, b) == kernel(hp, b, a)

    def test_dimension_mismatch(self):
        hp = GpHyperParams(v=1.0, w=(1.0, 1.0))
        with pytest.raises(DimensionMismatch):
            kernel(hp, [0.0], [1.0, 2.0])

    def test_matrix_agrees_with_pairwise(self):
        rng = np.random.default_rng(32)
        hp = GpHyperParams(v=0.4, w=(1.3, 0.2))
        x = rng.standard_normal((6, 2))
        x2 = rng.standard_normal((4, 2))
        mat = kernel_matrix(hp, x, x2)
        for i in range(6):
            for j in range(4):
                assert mat[i, j] == pytest.approx(kernel(hp, x[i], x2[j]), rel=1e-14)

    def test_hyperparameter_validation(self):
        with pytest.raises(InvalidInput):
            GpHyperParams(v=0.0, w=(1.0,))
        with pytest.raises(InvalidInput):
            GpHyperParams(v=1.0, w=(-0.1,))
        with pytest.raises(InvalidInput):
            GpHyperParams(v=1.0, w=(1.0,), epsilon=0.0)

    def test_pb_thickness_insensitivity(self):
        # the tiny thickness weight makes +-1.5 cm perturbations invisible
        hp = pb_default_hyperparams()
        rng = np.random.default_rng(33)
        for _ in range(100):
            t1, t2 = rng.uniform(0, 1, 2)
            ph1, ph2 = rng.uniform(5, 9, 2)
            w0 = rng.uniform(0, 3)
            base = kernel(hp, [t1, ph1, w0], [t2, ph2, w0])
            for dw in (1.5, -1.5):
                moved = kernel(hp, [t1, ph1, w0], [t2, ph2, w0 + dw])
                assert abs(moved - base) / base < 1e-8


class TestFit:
    def test_single_point_alpha(self):
        hp = GpHyperParams(v=1.0, w=(1.0,))
        model = gp_fit(hp, [[0.3]], [0.5])
        assert model.alpha[0] == pytest.approx(0.5 / (1.0 + hp.epsilon), rel=1e-12)

    def test_two_distant_points_near_diagonal(self):
        hp = GpHyperParams(v=1.0, w=(1.0,))
        y = np.array([0.2, 0.9])
        model = gp_fit(hp, [[0.0], [100.0]], y)
        np.testing.assert_allclose(model.alpha, y / (1.0 + hp.epsilon), rtol=1e-12)

    def test_alpha_matches_dense_solve(self):
        hp = pb_default_hyperparams()
        rng = np.random.default_rng(34)
        x = np.column_stack([rng.uniform(0, 1, 3), rng.uniform(5, 9, 3), rng.uniform(0, 3, 3)])
        y = rng.uniform(0, 1, 3)
        model = gp_fit(hp, x, y)
        k = kernel_matrix(hp, x) + hp.epsilon * np.eye(3)
        np.testing.assert_allclose(model.alpha, np.linalg.solve(k, y), atol=1e-8)

    def test_residual_identity(self):
        hp = mb_default_hyperparams()
        rng = np.random.default_rng(35)
        x = np.column_stack([rng.uniform(0, 1, 8), rng.uniform(0, 3, 8)])
        y = rng.uniform(0, 1, 8)
        model = gp_fit(hp, x, y)
        k = kernel_matrix(hp, x) + hp.epsilon * np.eye(8)
        resid = np.linalg.norm(k @ model.alpha - y) / np.linalg.norm(y)
        assert resid < 1e-8

    def test_shape_validation(self):
        hp = GpHyperParams(v=1.0, w=(1.0, 1.0))
        with pytest.raises(DimensionMismatch):
            gp_fit(hp, [[0.0, 1.0]], [0.5, 0.7])
        with pytest.raises(DimensionMismatch):
            gp_fit(hp, [[0.0, 1.0, 2.0]], [0.5])

    def test_psd_without_escalation(self):
        # random inputs up to n=32 factor at the nominal jitter alone
        rng = np.random.default_rng(36)
        for _ in range(20):
            n = int(rng.integers(2, 33))
            p = int(rng.integers(1, 4))
            hp = GpHyperParams(
                v=float(rng.uniform(0.1, 4.0)),
                w=tuple(rng.uniform(0.1, 20.0, p)),
                epsilon=float(rng.choice([1e-8, DEFAULT_EPSILON, 1e-6])),
            )
            x = rng.uniform(0, 1, size=(n, p))
            model = gp_fit(hp, x, rng.uniform(0, 1, n))
            assert model.factor.jitter_used == 0.0


class TestPredict:
    def test_single_point_shrinkage(self):
        hp = GpHyperParams(v=0.3852, w=(1.0,))
        model = gp_fit(hp, [[0.4]], [0.8])
        pred = gp_predict(model, [[0.4]])
        assert pred.mean[0] == pytest.approx(0.8 * hp.v / (hp.v + hp.epsilon), rel=1e-12)
        assert abs(pred.mean[0] - 0.8) < 1e-6

    def test_far_query_reverts_to_prior(self):
        hp = GpHyperParams(v=0.5, w=(2.0,))
        model = gp_fit(hp, [[0.0], [0.5], [1.0]], [0.2, 0.5, 0.9])
        pred = gp_predict(model, [[500.0]])
        assert abs(pred.mean[0]) < 1e-9
        assert pred.variance[0] == pytest.approx(hp.v, rel=1e-12)

    def test_brute_force_equivalence(self):
        for hp in (pb_default_hyperparams(), mb_default_hyperparams()):
            rng = np.random.default_rng(37)
            for _ in range(30):
                n = int(rng.integers(1, 6))
                x = rng.uniform(0, 1, size=(n, hp.p)) * np.array([1.0, 9.0, 3.0])[: hp.p]
                y = rng.uniform(0, 1, n)
                xq = rng.uniform(0, 1, size=(4, hp.p)) * np.array([1.0, 9.0, 3.0])[: hp.p]
                model = gp_fit(hp, x, y)
                pred = gp_predict(model, xq)
                mean_o, var_o = brute_force_posterior(hp, x, y, xq)
                np.testing.assert_allclose(pred.mean, mean_o, atol=1e-8)
                np.testing.assert_allclose(pred.variance, var_o, atol=1e-8)

    def test_interpolation_on_separated_design(self):
        # 4x4 lattice keeps the kernel matrix well conditioned, so training
        # targets are reproduced to the epsilon/v scale
        rng = np.random.default_rng(38)
        for _ in range(10):
            v = float(rng.uniform(0.3, 2.0))
            hp = GpHyperParams(v=v, w=(3.0, 3.0))
            g = np.arange(4.0)
            base = np.array([[a, b] for a in g for b in g])
            x = base + rng.uniform(-0.05, 0.05, base.shape)
            y = rng.uniform(0, 1, len(x))
            pred = gp_predict(gp_fit(hp, x, y), x)
            bound = 10.0 * hp.epsilon / v * np.max(np.abs(y)) + 1e-9
            assert np.max(np.abs(pred.mean - y)) <= bound

    def test_variance_bounds(self):
        rng = np.random.default_rng(39)
        for _ in range(10):
            hp = GpHyperParams(v=float(rng.uniform(0.2, 3.0)), w=(4.0, 1.0))
            g = np.arange(3.0)
            x = np.array([[a, b] for a in g for b in g])
            y = rng.uniform(0, 1, len(x))
            model = gp_fit(hp, x, y)
            at_train = gp_predict(model, x)
            assert np.all(at_train.variance <= hp.epsilon * (1.0 + 1e-6) * max(1.0, hp.v))
            queries = rng.uniform(-1, 3, size=(20, 2))
            anywhere = gp_predict(model, queries)
            assert np.all(anywhere.variance <= hp.v + 1e-12)
            assert np.all(anywhere.variance >= 0.0)

    def test_quantiles_bracket_mean(self):
        hp = GpHyperParams(v=1.0, w=(1.0,))
        model = gp_fit(hp, [[0.0]], [0.5])
        pred = gp_predict(model, [[2.0]])
        assert pred.quantile(0.5) == pytest.approx(pred.mean)
        assert float(pred.quantile(0.975)[0]) > float(pred.mean[0])
        assert float(pred.quantile(0.025)[0]) < float(pred.mean[0])


class TestNlml:
    def test_scalar_zero_target(self):
        hp = GpHyperParams(v=1.0 - 1.490116e-08, w=(1.0,), epsilon=1.490116e-08)
        model = gp_fit(hp, [[0.0]], [0.0])
        assert gp_nlml(model) == pytest.approx(0.5 * math.log(2 * math.pi), rel=1e-12)

    def test_scalar_unit_target(self):
        hp = GpHyperParams(v=1.0 - 1.490116e-08, w=(1.0,), epsilon=1.490116e-08)
        model = gp_fit(hp, [[0.0]], [1.0])
        assert gp_nlml(model) == pytest.approx(0.5 + 0.5 * math.log(2 * math.pi), rel=1e-12)

    def test_zero_targets_minimize_data_term(self):
        hp = GpHyperParams(v=0.7, w=(2.0,))
        rng = np.random.default_rng(40)
        x = rng.uniform(0, 1, size=(6, 1))
        zero_model = gp_fit(hp, x, np.zeros(6))
        data_term = 0.5 * float(zero_model.y_train @ zero_model.alpha)
        assert data_term == 0.0


def draw_from(hp, x, rng):
    k = kernel_matrix(hp, x)
    k[np.diag_indices_from(k)] += hp.epsilon
    return np.linalg.cholesky(k) @ rng.standard_normal(len(x))


class TestOptimize:
    def test_objective_never_worse_than_start(self):
        rng = np.random.default_rng(41)
        x = np.sort(rng.uniform(0, 1, 15))[:, None]
        y = draw_from(GpHyperParams(v=0.5, w=(8.0,)), x, rng)
        hp0 = GpHyperParams(v=1.0, w=(1.0,))
        before = gp_nlml(gp_fit(hp0, x, y))
        hp_opt = gp_optimize_hyperparams(x, y, hp0)
        assert hp_opt.epsilon == hp0.epsilon
        assert gp_nlml(gp_fit(hp_opt, x, y)) <= before

    def test_start_at_truth_barely_moves(self):
        rng = np.random.default_rng(42)
        hp_true = GpHyperParams(v=0.5, w=(8.0,))
        x = np.sort(rng.uniform(0, 1, 15))[:, None]
        y = draw_from(hp_true, x, rng)
        hp_opt = gp_optimize_hyperparams(x, y, hp_true)
        before = gp_nlml(gp_fit(hp_true, x, y))
        after = gp_nlml(gp_fit(hp_opt, x, y))
        assert after <= before
        # sample-level optimum sits near the generating values
        assert 0.2 < hp_opt.w[0] / hp_true.w[0] < 5.0
        assert 0.2 < hp_opt.v / hp_true.v < 5.0

    def test_descent_lands_in_best_grid_cell(self):
        # coarse grid-search oracle over log space for a 1-d sin-like toy
        # (zero mean, matching the prior)
        rng = np.random.default_rng(43)
        x = np.linspace(0, 1, 20)[:, None]
        y = 0.3 * np.sin(2 * np.pi * x[:, 0]) + 0.01 * rng.standard_normal(20)
        hp0 = GpHyperParams(v=1.0, w=(1.0,))
        hp_opt = gp_optimize_hyperparams(
            x, y, hp0, config=DescentConfig(step=0.1, tolerance=1e-12, max_iters=500)
        )
        log_w_grid = np.linspace(math.log(0.5), math.log(200.0), 9)
        log_v_grid = np.linspace(math.log(0.05), math.log(5.0), 7)
        best = min(
            (
                gp_nlml(gp_fit(GpHyperParams(v=math.exp(lv), w=(math.exp(lw),)), x, y)),
                lw,
            )
            for lv in log_v_grid
            for lw in log_w_grid
        )
        assert gp_nlml(gp_fit(hp_opt, x, y)) <= best[0]
        cell = log_w_grid[1] - log_w_grid[0]
        assert abs(math.log(hp_opt.w[0]) - best[1]) <= cell

    def test_loo_objective_supported(self):
        rng = np.random.default_rng(44)
        x = np.sort(rng.uniform(0, 1, 12))[:, None]
        y = draw_from(GpHyperParams(v=0.5, w=(10.0,)), x, rng)
        hp0 = GpHyperParams(v=1.0, w=(1.0,))
        before = gp_loo_sse(gp_fit(hp0, x, y))
        hp_opt = gp_optimize_hyperparams(x, y, hp0, objective="sse")
        assert gp_loo_sse(gp_fit(hp_opt, x, y)) <= before

    def test_rejects_bad_arguments(self):
        x = np.linspace(0, 1, 5)[:, None]
        y = np.zeros(5)
        with pytest.raises(InvalidInput):
            gp_optimize_hyperparams(x, y, GpHyperParams(v=1.0, w=(1.0,)), objective="rmse")
        with pytest.raises(InvalidInput):
            gp_optimize_hyperparams(x, y, GpHyperParams(v=1.0, w=(0.0,)))


class TestBuildInputs:
    def make_series(self, contaminant, ph=None):
        samples = tuple(
            Sample(t_raw=t, concentration=50.0 - 0.01 * t, thickness_w=3.0, ph=ph)
            for t in (10.0, 100.0, 3600.0)
        )
        return ObservationSeries(contaminant, "x", 50.0, samples)

    def test_pb_columns_with_assumed_ph(self):
        x, y, ph_assumed = build_inputs(self.make_series(Contaminant.PB), default_ph=7.0)
        assert x.shape == (3, 3)
        assert ph_assumed
        np.testing.assert_array_equal(x[:, 1], 7.0)
        np.testing.assert_array_equal(x[:, 2], 3.0)
        assert x[-1, 0] == 1.0

    def test_pb_columns_with_recorded_ph(self):
        x, _, ph_assumed = build_inputs(self.make_series(Contaminant.PB, ph=6.2))
        assert not ph_assumed
        np.testing.assert_array_equal(x[:, 1], 6.2)

    def test_mb_columns(self):
        x, y, ph_assumed = build_inputs(self.make_series(Contaminant.METHYLENE_BLUE))
        assert x.shape == (3, 2)
        assert not ph_assumed
        np.testing.assert_allclose(y, 0.01 * np.array([10.0, 100.0, 3600.0]) / 50.0)
