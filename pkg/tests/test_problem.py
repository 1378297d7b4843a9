import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import double_integrator_raw, scalar_problem
from mayerlabour.benchmarks import BUILTIN_NAMES, builtin
from mayerlabour.numerics import TimeGrid
from mayerlabour.problem import (
    Box,
    ControlSet,
    ControlSignal,
    MayerProblem,
    eval_hamiltonian,
    eval_hamiltonian_du,
    validate_problem,
)


class TestControlSet:
    def test_box_membership(self):
        K = ControlSet.from_box([-1, 0], [1, 2])
        assert K.contains([0.5, 2.0]) and not K.contains([0.5, 2.1])

    def test_finite_membership_and_scan(self):
        K = ControlSet.from_points([[-1.0], [1.0]])
        assert K.contains([1.0]) and not K.contains([0.0])
        assert np.array_equal(K.scan_points(), [[-1.0], [1.0]])

    def test_box_scan_includes_corners(self):
        pts = ControlSet.from_box([-1, -1], [1, 1]).scan_points(9)
        assert len(pts) == 81
        for c in Box([-1, -1], [1, 1]).corners():
            assert np.any(np.all(pts == c, axis=1))

    def test_predicate_set(self):
        K = ControlSet.from_predicate(lambda u: abs(u[0]) > 0.5, [-1], [1])
        assert K.contains([0.9]) and not K.contains([0.1])
        draws = K.sample(np.random.default_rng(1), 50)
        assert np.all(np.abs(draws) > 0.5)
        assert np.all(np.abs(K.scan_points(9)) > 0.5)

    def test_enclosing_default_is_inflated_box(self):
        pr = scalar_problem()
        assert np.allclose(pr.enclosing_convex.lower, -1.2)
        assert np.allclose(pr.enclosing_convex.upper, 1.2)

    def test_bad_box(self):
        with pytest.raises(ValueError):
            Box([1.0], [0.0])


class TestHamiltonian:
    def test_integrator(self):
        pr = scalar_problem()
        assert eval_hamiltonian(pr, 0.0, np.array([0.0]), np.array([2.0]), np.array([3.0])) == 6.0

    def test_zero_costate(self):
        pr = scalar_problem(dynamics="bilinear")
        assert eval_hamiltonian(pr, 0.3, np.array([4.0]), np.array([0.0]), np.array([1.0])) == 0.0
        assert np.all(eval_hamiltonian_du(pr, 0.3, np.array([4.0]), np.array([0.0]), np.array([1.0])) == 0)

    def test_double_integrator(self):
        pr = double_integrator_raw()
        h = eval_hamiltonian(pr, 0.0, np.array([0.0, 2.0]), np.array([1.0, 1.0]), np.array([5.0]))
        assert h == pytest.approx(7.0)

    def test_du_values(self):
        assert np.allclose(eval_hamiltonian_du(scalar_problem(), 0, np.array([0.0]), np.array([-1.0]), np.array([0.3])), [-1])
        pr = scalar_problem(dynamics="bilinear")
        assert np.allclose(eval_hamiltonian_du(pr, 0, np.array([2.0]), np.array([3.0]), np.array([0.3])), [6])

    def test_du_by_finite_differences_without_derivative(self):
        pr = double_integrator_raw()
        hu = eval_hamiltonian_du(pr, 0.1, np.array([0.3, 0.2]), np.array([0.7, -2.0]), np.array([0.4]))
        assert np.allclose(hu, [-2.0], atol=1e-8)

    def test_broadcast_over_batch(self):
        pr = builtin("bilinear").problem
        q = np.linspace(0.5, 2, 6).reshape(3, 2, 1)
        h = eval_hamiltonian(pr, np.array([0.1, 0.2, 0.3])[:, None], q, -q, np.full((3, 2, 1), 0.5))
        assert h.shape == (3, 2)
        assert np.allclose(h, -0.5 * q[..., 0] ** 2)


class TestSignal:
    def test_linear_interpolation(self):
        g = TimeGrid.uniform(1.0, 2)
        u = ControlSignal(g, [0.0, 1.0, 0.0])
        assert u(0.25)[0] == pytest.approx(0.5)

    def test_piecewise_constant_is_right_continuous(self):
        g = TimeGrid.uniform(1.0, 2)
        u = ControlSignal(g, [0.0, 1.0, 2.0], "piecewise-constant-left")
        assert u(0.49)[0] == 0.0 and u(0.5)[0] == 1.0 and u(1.0)[0] == 2.0

    def test_resample_refinement_is_exact(self):
        g = TimeGrid.uniform(1.0, 4)
        u = ControlSignal.from_function(g, lambda t: np.sin(3 * t))
        fine = u.resample(g.with_nodes([0.1, 0.6]))
        ts = np.linspace(0, 1, 37)
        assert np.allclose(fine(ts), u(ts), atol=1e-15)

    def test_rejects_shape_and_nonfinite(self):
        g = TimeGrid.uniform(1.0, 2)
        with pytest.raises(ValueError):
            ControlSignal(g, np.zeros(4))
        with pytest.raises(ValueError):
            ControlSignal(g, [0.0, np.inf, 0.0])
        with pytest.raises(ValueError):
            ControlSignal(g, np.zeros(3), "cubic")

    def test_outside_enclosing_box_rejected(self):
        pr = scalar_problem()
        with pytest.raises(ValueError, match="outside"):
            pr.check_signal(ControlSignal.constant(pr.time_grid(4), 1.5))
        pr.check_signal(ControlSignal.constant(pr.time_grid(4), 1.15))


class TestValidate:
    @pytest.mark.parametrize("name", BUILTIN_NAMES)
    def test_builtins_clean(self, name):
        assert validate_problem(builtin(name).problem) == []

    def test_unramped_cost_flagged(self):
        vs = validate_problem(scalar_problem(ramp=False))
        assert [v.kind for v in vs] == ["initial-cost"]
        assert "C(0, q) = 0" in vs[0].message

    def test_wrong_dfdq_flagged(self):
        pr = builtin("bilinear").problem
        from dataclasses import replace
        bad = replace(pr, dynamics_dq=lambda t, q, u: 2.0 * pr.dynamics_dq(t, q, u))
        kinds = [v.kind for v in validate_problem(bad)]
        assert kinds == ["derivative-mismatch"]

    def test_nonfinite_flagged(self):
        pr = scalar_problem(ramp=True)
        from dataclasses import replace
        bad = replace(pr, dynamics=lambda t, q, u: np.log(q - 100.0) + u)
        with np.errstate(invalid="ignore"):
            kinds = [v.kind for v in validate_problem(bad)]
        assert "non-finite" in kinds

    def test_enclosing_too_small(self):
        pr = scalar_problem(ramp=True)
        from dataclasses import replace
        bad = replace(pr, enclosing_convex=Box([-0.5], [0.5]))
        assert "control-set" in [v.kind for v in validate_problem(bad)]

    def test_finite_difference_fallbacks(self):
        pr = scalar_problem("quadratic", "bilinear", ramp=True, with_derivatives=False)
        q, u = np.array([1.3]), np.array([0.4])
        assert np.allclose(pr.f_q(0.2, q, u), [[0.4]], atol=1e-8)
        assert np.allclose(pr.f_u(0.2, q, u), [[1.3]], atol=1e-8)
        assert np.allclose(pr.cost_q(0.5, q), [0.5 * 1.3], atol=1e-8)
        assert np.allclose(pr.cost_t(0.5, q), 0.5 * 1.69, atol=1e-8)

    def test_constructor_checks(self):
        with pytest.raises(ValueError):
            scalar_problem(T=0.0)
        with pytest.raises(ValueError):
            MayerProblem(1, 2, 1.0, lambda t, q, u: u, lambda t, q: q[..., 0],
                         ControlSet.from_box([-1], [1]), [0.0])


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3), st.floats(-3, 3), st.floats(0, 1))
def test_hamiltonian_linear_in_costate(us, p, t):
    pr = builtin("double-integrator").problem
    q = np.array([0.3, -0.2])
    u = np.array([us[0]])
    p1, p2 = np.array([p, 1.0]), np.array([us[1], us[2]])
    lhs = eval_hamiltonian(pr, t, q, p1 + p2, u)
    rhs = eval_hamiltonian(pr, t, q, p1, u) + eval_hamiltonian(pr, t, q, p2, u)
    assert lhs == pytest.approx(rhs, abs=1e-12)
