"""Problem definitions and independent oracle tests."""

import numpy as np
import pytest

from bsdemc import (
    LinearDriverSpec,
    brute_force_control_value,
    build_problem,
    build_time_grid,
    g_operator,
    heat_reference,
    linear_bsde_reference,
    manufactured_semilinear,
    uncertain_vol_reference,
)
from bsdemc.problems import (
    REGISTRY,
    make_heat,
    make_hjb_tiny,
    make_linear_bsde,
    make_manufactured_sine,
    make_uncertain_vol,
)


class TestGOperator:
    def test_zero(self):
        assert g_operator(0.0, 1.0, 2.0) == 0.0

    def test_positive_curvature(self):
        assert g_operator(1.0, 1.0, 2.0) == pytest.approx(2.0)

    def test_negative_curvature(self):
        assert g_operator(-1.0, 1.0, 2.0) == pytest.approx(-0.5)

    def test_rejects_bad_band(self):
        with pytest.raises(ValueError):
            g_operator(1.0, 2.0, 1.0)
        with pytest.raises(ValueError):
            g_operator(1.0, 0.0, 1.0)


class TestHeatReference:
    def test_normalization(self):
        val, tol = heat_reference(0.3, [0.7], lambda x: np.ones(x.shape[0]), 1.0)
        assert val == pytest.approx(1.0, abs=1e-9)

    def test_odd_part_cancels(self):
        val, tol = heat_reference(0.0, [0.4], lambda x: x[:, 0], 1.0)
        assert val == pytest.approx(0.4, abs=1e-9)

    def test_second_moment(self):
        val, tol = heat_reference(0.0, [0.0], lambda x: x[:, 0] ** 2, 1.0)
        assert abs(val - 1.0) <= max(tol, 1e-8)

    def test_positivity_for_nonnegative_payoff(self):
        val, _ = heat_reference(0.0, [-1.0], lambda x: np.abs(x[:, 0]), 1.0)
        assert val >= 0.0

    def test_terminal_time_returns_payoff(self):
        val, tol = heat_reference(1.0, [2.0], lambda x: x[:, 0] ** 2, 1.0)
        assert val == 4.0 and tol == 0.0

    def test_t_beyond_horizon_rejected(self):
        with pytest.raises(ValueError):
            heat_reference(1.5, [0.0], lambda x: x[:, 0], 1.0)

    def test_two_dimensional_payoff(self):
        val, tol = heat_reference(
            0.0, [0.0, 0.0], lambda x: x[:, 0] ** 2 + x[:, 1] ** 2, 1.0
        )
        assert abs(val - 2.0) <= max(10 * tol, 1e-6)


class TestUncertainVolReference:
    def test_quadratic_payoff(self):
        val, _ = uncertain_vol_reference(
            lambda x: x[:, 0] ** 2, [0.0], 0.0, 1.0, a_hi=1.0
        )
        assert val == pytest.approx(1.0, abs=1e-8)

    def test_singleton_band_equals_heat(self):
        h = lambda x: np.cosh(x[:, 0])
        a, _ = uncertain_vol_reference(h, [0.1], 0.0, 1.0, a_hi=0.7)
        b, _ = heat_reference(0.0, [0.1], h, 1.0, volatility=0.7)
        assert a == b

    def test_linear_payoff_is_martingale(self):
        val, _ = uncertain_vol_reference(lambda x: x[:, 0], [0.3], 0.0, 1.0, a_hi=2.0)
        assert val == pytest.approx(0.3, abs=1e-8)


class TestLinearBSDEReference:
    def test_degenerate_driver_reduces_to_heat(self):
        spec = LinearDriverSpec(0.0, [0.0], 0.0)
        h = lambda x: x[:, 0] ** 2
        val, _ = linear_bsde_reference(spec, h, 0.0, 1.0, [0.0], 1.0)
        ref, _ = heat_reference(0.0, [0.0], h, 1.0)
        assert val == pytest.approx(ref, abs=1e-10)

    def test_pure_running_reward(self):
        spec = LinearDriverSpec(0.0, [0.0], 1.0)
        val, _ = linear_bsde_reference(
            spec, lambda x: np.zeros(x.shape[0]), 0.0, 1.0, [0.0], 1.0
        )
        assert val == pytest.approx(1.0, abs=1e-10)

    def test_discounting(self):
        spec = LinearDriverSpec(1.0, [0.0], 0.0)
        val, _ = linear_bsde_reference(
            spec, lambda x: np.ones(x.shape[0]), 0.0, 1.0, [0.0], 1.0
        )
        assert val == pytest.approx(np.e, abs=1e-8)

    def test_girsanov_drift_shift(self):
        # alpha shifts the mean of the terminal Gaussian by sigma * alpha * T
        spec = LinearDriverSpec(0.0, [0.5], 0.0)
        val, _ = linear_bsde_reference(spec, lambda x: x[:, 0], 0.0, 2.0, [1.0], 1.0)
        assert val == pytest.approx(1.0 + 2.0 * 0.5, abs=1e-8)

    def test_nonfinite_constants_rejected(self):
        with pytest.raises(ValueError):
            LinearDriverSpec(np.inf, [0.0], 0.0)


class TestManufactured:
    def test_linear_solution_gives_zero_source(self):
        prob = manufactured_semilinear(
            v=lambda t, x: x[:, 0],
            dv_dt=lambda t, x: np.zeros(x.shape[0]),
            grad_v=lambda t, x: np.ones((x.shape[0], 1)),
            hess_v=lambda t, x: np.zeros((x.shape[0], 1, 1)),
            base_drift=lambda x: np.zeros_like(x),
            base_diffusion=lambda x: np.ones((x.shape[0], 1, 1)),
            dim=1, horizon=1.0, x0=[0.0],
        )
        xt = np.array([[0.3, 0.2], [-1.0, 0.9]])
        assert np.allclose(prob.driver(xt, None, None), 0.0, atol=1e-14)

    def test_heat_polynomial_gives_zero_source(self):
        T = 1.0
        prob = manufactured_semilinear(
            v=lambda t, x: x[:, 0] ** 2 + (T - t),
            dv_dt=lambda t, x: -np.ones(x.shape[0]),
            grad_v=lambda t, x: 2.0 * x,
            hess_v=lambda t, x: 2.0 * np.ones((x.shape[0], 1, 1)),
            base_drift=lambda x: np.zeros_like(x),
            base_diffusion=lambda x: np.ones((x.shape[0], 1, 1)),
            dim=1, horizon=T, x0=[0.0],
        )
        xt = np.array([[0.3, 0.2], [-1.0, 0.9]])
        assert np.allclose(prob.driver(xt, None, None), 0.0, atol=1e-13)

    def test_sine_solution_source_formula(self):
        prob = make_manufactured_sine()
        # v = e^t sin x with sigma = 1: source dv_dt + Lv = e^t sin(x)(1 - 1/2)
        xt = np.array([[0.4, 0.25], [-0.8, 0.6]])
        expected = -np.exp(xt[:, 1]) * np.sin(xt[:, 0]) * 0.5
        assert np.allclose(prob.driver(xt, None, None), expected, atol=1e-12)

    def test_pde_residual_with_finite_differences(self):
        prob = make_manufactured_sine()
        rng = np.random.default_rng(42)
        ts = rng.uniform(0.0, 1.0, 100)
        xs = rng.uniform(-2.0, 2.0, 100)
        eps = 1e-5

        def v(t, x):
            return np.exp(t) * np.sin(x)

        dv_dt = (v(ts + eps, xs) - v(ts - eps, xs)) / (2 * eps)
        vxx = (v(ts, xs + eps) - 2 * v(ts, xs) + v(ts, xs - eps)) / eps**2
        xt = np.stack([xs, ts], axis=1)
        f = prob.driver(xt, None, None)
        residual = dv_dt + 0.5 * vxx + f
        assert np.max(np.abs(residual)) < 1e-5

    def test_reference_value_and_z(self):
        prob = make_manufactured_sine()
        xt = np.array([[0.5, 0.3]])
        assert prob.reference.value(0.3, xt)[0] == pytest.approx(
            np.exp(0.3) * np.sin(0.5), abs=1e-12
        )
        z = prob.reference.z(0.3, xt)
        assert z[0, 0] == pytest.approx(np.exp(0.3) * np.cos(0.5), abs=1e-12)
        assert z[0, 1] == 0.0  # the time coordinate carries no noise

    def test_nonfinite_source_rejected(self):
        # the construction probe evaluates the driver at x0 and fails fast
        with pytest.raises(ValueError):
            manufactured_semilinear(
                v=lambda t, x: x[:, 0],
                dv_dt=lambda t, x: np.full(x.shape[0], np.nan),
                grad_v=lambda t, x: np.ones((x.shape[0], 1)),
                hess_v=lambda t, x: np.zeros((x.shape[0], 1, 1)),
                base_drift=lambda x: np.zeros_like(x),
                base_diffusion=lambda x: np.ones((x.shape[0], 1, 1)),
                dim=1, horizon=1.0, x0=[0.0],
            )


class TestBruteForce:
    def test_singleton_control_matches_heat(self):
        prob = make_uncertain_vol()
        grid = build_time_grid(1.0, 3)
        bf = brute_force_control_value(prob, grid, [[1.0]], 50_000, seed=50)
        ref, _ = heat_reference(0.0, [0.0], lambda x: x[:, 0] ** 2, 1.0)
        assert abs(bf.value - ref) <= 3.0 * bf.se

    def test_convexity_forces_high_volatility(self):
        prob = make_uncertain_vol()
        grid = build_time_grid(1.0, 3)
        bf = brute_force_control_value(prob, grid, [[0.5], [1.0]], 50_000, seed=51)
        assert bf.sequence == (1.0, 1.0, 1.0)
        assert abs(bf.value - 1.0) <= 3.0 * bf.se

    def test_budget_refused_with_count(self):
        prob = make_uncertain_vol()
        grid = build_time_grid(1.0, 8)
        with pytest.raises(ValueError, match="256"):
            brute_force_control_value(prob, grid, [[0.5], [1.0]], 100, seed=0)

    def test_superset_never_decreases_value(self):
        prob = make_hjb_tiny()
        grid = build_time_grid(1.0, 2)
        small = brute_force_control_value(prob, grid, [[0.5]], 20_000, seed=52)
        big = brute_force_control_value(prob, grid, [[0.5], [1.0]], 20_000, seed=52)
        assert big.value >= small.value


class TestRegistry:
    def test_all_registered_problems_build(self):
        for name in REGISTRY:
            prob = build_problem(name)
            assert prob.name == name

    def test_unknown_name_raises_keyerror(self):
        with pytest.raises(KeyError, match="nope"):
            build_problem("nope")

    def test_overrides_forwarded(self):
        prob = build_problem("linear-bsde", delta=0.0, gamma=1.0)
        assert prob.reference.value(0.0, np.zeros((1, 1)))[0] == pytest.approx(2.0)

    def test_heat_reference_fields(self):
        prob = make_heat()
        assert prob.reference.value(1.0, np.array([[2.0]]))[0] == 4.0

    def test_linear_bsde_defaults(self):
        prob = make_linear_bsde()
        assert prob.reference.value(0.0, np.zeros((1, 1)))[0] == pytest.approx(np.e)

    def test_problem_probes_finiteness(self):
        from bsdemc import SemilinearProblem

        with pytest.raises(ValueError):
            SemilinearProblem(
                dim=1,
                drift=lambda x: np.full_like(x, np.inf),
                diffusion=lambda x: np.ones((x.shape[0], 1, 1)),
                driver=lambda x, y, z: np.zeros(x.shape[0]),
                terminal=lambda x: x[:, 0],
                horizon=1.0,
                x0=[0.0],
                name="bad",
            )

    def test_hjb_frozen_control(self):
        prob = make_hjb_tiny()
        frozen = prob.frozen(np.array([1.0]))
        x = np.array([[0.0]])
        assert frozen.driver(x, np.zeros(1), np.zeros((1, 1)))[0] == pytest.approx(1.0)
        assert frozen.reference is None
