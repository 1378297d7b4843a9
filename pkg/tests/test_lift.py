import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import double_integrator_raw, scalar_problem
from mayerlabour.benchmarks import BUILTIN_NAMES, builtin
from mayerlabour.lift import (
    CostForm,
    LiftedCurve,
    backward_costate,
    cost_line_integral,
    forward_state,
    lift_p_optimal,
    lift_with_initial_costate,
    terminal_cost_value,
)
from mayerlabour.numerics import SampledPath
from mayerlabour.problem import ControlSignal, eval_hamiltonian


def const(pr, value, steps=1000, interp="piecewise-linear"):
    return ControlSignal.constant(pr.time_grid(steps), value, interp)


class TestForwardState:
    def test_constant_control(self, steer):
        assert forward_state(steer, const(steer, -1.0)).final[0] == -1.0

    def test_linear_control_exact(self, steer):
        u = ControlSignal.from_function(steer.time_grid(10), lambda t: t)
        assert forward_state(steer, u).final[0] == pytest.approx(0.5, abs=1e-15)

    def test_double_integrator(self):
        pr = double_integrator_raw()
        assert np.allclose(forward_state(pr, const(pr, 1.0, 10)).final, [0.5, 1.0], atol=1e-14)

    def test_piecewise_constant_jump_exact(self, steer):
        g = steer.time_grid(4)
        u = ControlSignal(g, [1.0, 1.0, -1.0, -1.0, -1.0], "piecewise-constant-left")
        assert forward_state(steer, u).values[:, 0] == pytest.approx([0, 0.25, 0.5, 0.25, 0.0])


class TestCostate:
    def test_constant_costate(self, steer):
        u = const(steer, 0.3)
        p = backward_costate(steer, u, forward_state(steer, u))
        assert np.all(p.values == -1.0)

    def test_quadratic_costate(self):
        pr = scalar_problem("quadratic", a0=1.0)
        u = const(pr, 1.0)
        p = backward_costate(pr, u, forward_state(pr, u))
        assert np.allclose(p.values, -2.0, atol=1e-13)

    def test_bilinear_closed_form(self):
        pr = scalar_problem("linear", "bilinear", a0=1.0)
        u = const(pr, 1.0)
        p = backward_costate(pr, u, forward_state(pr, u))
        t = u.grid.nodes
        assert np.max(np.abs(p.values[:, 0] + np.exp(1.0 - t))) <= 1e-8

    def test_grid_mismatch(self, steer):
        u = const(steer, 0.0)
        with pytest.raises(ValueError):
            backward_costate(steer, u, forward_state(steer, const(steer, 0.0, 10)))


class TestLifts:
    def test_b_values(self):
        assert lift_p_optimal(scalar_problem(), const(scalar_problem(), -1.0)).source.b[0] == -1.0
        quad = scalar_problem("quadratic", a0=1.0)
        curve = lift_p_optimal(quad, const(quad, -1.0))
        assert abs(curve.q.final[0]) <= 1e-14 and abs(curve.source.b[0]) <= 1e-14
        bil = scalar_problem("linear", "bilinear", a0=1.0)
        assert abs(lift_p_optimal(bil, const(bil, 1.0)).source.b[0] + np.e) <= 1e-8

    @pytest.mark.parametrize("name", BUILTIN_NAMES)
    def test_terminal_condition_imposed(self, name):
        b = builtin(name)
        curve = lift_p_optimal(b.problem, b.known_optimal)
        assert curve.terminal_residual(b.problem) <= 1e-10
        assert curve.is_p_optimal(b.problem)

    def test_forward_with_optimal_b_matches(self):
        b = builtin("bilinear")
        rng = np.random.default_rng(3)
        u = ControlSignal(b.problem.time_grid(), np.interp(np.linspace(0, 1, 1001), np.linspace(0, 1, 6), rng.uniform(-1, 1, 6)))
        back = lift_p_optimal(b.problem, u)
        fwd = lift_with_initial_costate(b.problem, u, back.source.b)
        assert np.max(np.abs(fwd.p.values - back.p.values)) <= 1e-8

    def test_prescribed_costate(self, steer):
        assert np.all(lift_with_initial_costate(steer, const(steer, 0.2), [0.0]).p.values == 0.0)
        curve = lift_with_initial_costate(steer, const(steer, 0.2), [5.0])
        assert np.all(curve.p.values == 5.0)
        assert curve.terminal_residual(steer) == pytest.approx(6.0)
        assert not curve.is_p_optimal(steer)

    def test_bad_costate_shape(self, steer):
        with pytest.raises(ValueError):
            lift_with_initial_costate(steer, const(steer, 0.2), [1.0, 2.0])

    def test_cost_independent_of_b(self):
        pr = builtin("bilinear").problem
        u = const(pr, 0.4)
        costs = {terminal_cost_value(pr, lift_with_initial_costate(pr, u, [b]).q).hex() for b in (-3.0, 0.0, 7.0)}
        assert len(costs) == 1


class TestCostValues:
    def test_terminal_values(self):
        quad = scalar_problem("quadratic", a0=1.0)
        assert terminal_cost_value(scalar_problem(), forward_state(scalar_problem(), const(scalar_problem(), -1.0))) == -1.0
        assert terminal_cost_value(quad, forward_state(quad, const(quad, -1.0))) == pytest.approx(0.0, abs=1e-28)
        assert terminal_cost_value(quad, forward_state(quad, const(quad, 1.0))) == pytest.approx(2.0)

    def test_line_integral_matches_terminal(self, steer):
        curve = lift_p_optimal(steer, const(steer, -1.0))
        assert abs(cost_line_integral(steer, curve) + 1.0) <= 1e-6

    def test_zero_cost_problem(self):
        from dataclasses import replace
        pr = replace(scalar_problem(), terminal_cost=lambda t, q: 0.0 * q[..., 0],
                     terminal_cost_dq=lambda t, q: 0.0 * q, terminal_cost_dt=lambda t, q: 0.0 * q[..., 0])
        assert cost_line_integral(pr, lift_p_optimal(pr, const(pr, 0.5))) == 0.0

    def test_corrupted_curve_differs(self):
        b = builtin("quadratic-target")
        u = const(b.problem, 0.3)
        curve = lift_p_optimal(b.problem, u)
        noise = 0.2 * np.sin(40 * curve.grid.nodes)[:, None]
        bad = LiftedCurve(curve.grid, SampledPath(curve.grid, curve.q.values + noise), curve.p, curve.source)
        good = cost_line_integral(b.problem, curve)
        assert abs(good - terminal_cost_value(b.problem, curve.q)) <= 1e-6
        assert abs(cost_line_integral(b.problem, bad) - good) > 1e-3

    @pytest.mark.parametrize("name", BUILTIN_NAMES)
    def test_vertical_part_vanishes(self, name):
        pr = builtin(name).problem
        t = pr.time_grid().nodes
        u = ControlSignal(pr.time_grid(), np.cos(3 * t))
        curve = lift_p_optimal(pr, u)
        qdot = np.diff(curve.q.values, axis=0) / np.diff(t)[:, None]
        mid = 0.5 * (t[1:] + t[:-1])
        pm = 0.5 * (curve.p.values[1:] + curve.p.values[:-1])
        qm = 0.5 * (curve.q.values[1:] + curve.q.values[:-1])
        H = eval_hamiltonian(pr, mid, qm, pm, u(mid))
        assert np.max(np.abs(np.sum(pm * qdot, axis=1) - H)) <= 1e-4

    def test_cost_form_coefficients(self):
        pr = builtin("steer-down").problem
        a_t, a_q, a_p = CostForm(pr).coefficients(0.5, np.array([0.2]), np.array([-1.0]), np.array([0.3]))
        assert a_t == pytest.approx(0.3 + 0.2)
        assert np.allclose(a_q, -1.0 + 0.5) and np.all(a_p == 0)


@settings(max_examples=10, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4), st.sampled_from(BUILTIN_NAMES))
def test_cost_identity_on_random_controls(knots, name):
    pr = builtin(name).problem
    t = pr.time_grid().nodes
    u = ControlSignal(pr.time_grid(), np.interp(t, np.linspace(0, pr.horizon, 4), knots))
    curve = lift_p_optimal(pr, u)
    assert abs(cost_line_integral(pr, curve) - terminal_cost_value(pr, curve.q)) <= 1e-5
