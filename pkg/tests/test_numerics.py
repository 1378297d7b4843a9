import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mayerlabour.numerics import (
    IntegrationError,
    SampledPath,
    SGrid,
    TimeGrid,
    integrate_ode,
    quad_2d,
    quad_trapezoid,
)


class TestTimeGrid:
    def test_uniform_endpoints_exact(self):
        g = TimeGrid.uniform(0.3, 7)
        assert g.nodes[0] == 0.0 and g.nodes[-1] == 0.3 and len(g) == 8

    @pytest.mark.parametrize("nodes", [[0.0], [0.1, 1.0], [0.0, 0.5, 0.5, 1.0], [0.0, 1.0, 0.5], [0.0, np.nan]])
    def test_rejects_bad_nodes(self, nodes):
        with pytest.raises(ValueError):
            TimeGrid(nodes)

    def test_nodes_read_only(self):
        g = TimeGrid.uniform(1.0, 4)
        with pytest.raises(ValueError):
            g.nodes[1] = 0.3

    def test_with_nodes_merges_and_deduplicates(self):
        g = TimeGrid.uniform(1.0, 4).with_nodes([0.3, 0.5 + 1e-15, 0.3])
        assert np.allclose(g.nodes, [0, 0.25, 0.3, 0.5, 0.75, 1.0])
        assert g.index_of(0.3) == 2
        with pytest.raises(ValueError):
            g.index_of(0.31)

    def test_equality_by_nodes(self):
        assert TimeGrid.uniform(1.0, 10) == TimeGrid(np.linspace(0, 1, 11))
        assert TimeGrid.uniform(1.0, 10) != TimeGrid.uniform(1.0, 11)

    def test_sgrid_must_end_at_one(self):
        assert SGrid.uniform(4).end == 1.0
        with pytest.raises(ValueError):
            SGrid([0.0, 0.5])


class TestIntegrateOde:
    def test_zero_field_is_constant(self):
        path = integrate_ode(lambda t, y: np.zeros_like(y), [5.0], TimeGrid.uniform(2.0, 13))
        assert np.all(path.values == 5.0)

    def test_cubic_rhs_integrated_exactly(self):
        path = integrate_ode(lambda t, y: np.array([t**2]), [0.0], TimeGrid.uniform(1.0, 10))
        assert path.final[0] == pytest.approx(1.0 / 3.0, abs=1e-15)

    def test_exponential(self):
        path = integrate_ode(lambda t, y: y, [1.0], TimeGrid.uniform(1.0, 100))
        assert abs(path.final[0] - np.e) <= 1e-9

    def test_backward_reported_in_increasing_order(self):
        path = integrate_ode(lambda t, y: y, [np.e], TimeGrid.uniform(1.0, 100), "backward")
        assert path.final[0] == np.e
        assert abs(path.initial[0] - 1.0) <= 1e-9

    def test_forward_backward_consistency_linear(self):
        A = np.array([[0.0, 1.0], [-2.0, -0.3]])
        grid = TimeGrid.uniform(1.0, 1000)
        fwd = integrate_ode(lambda t, y: A @ y, [1.0, -0.5], grid)
        back = integrate_ode(lambda t, y: A @ y, fwd.final, grid, "backward")
        assert np.max(np.abs(back.initial - [1.0, -0.5])) <= 1e-8

    def test_nonfinite_names_node(self):
        def rhs(t, y):
            return np.array([np.inf]) if t > 0.5 else np.array([1.0])

        with pytest.raises(IntegrationError) as info:
            integrate_ode(rhs, [0.0], TimeGrid.uniform(1.0, 10))
        assert info.value.node in (5, 6)
        assert "node" in str(info.value)

    def test_bad_direction(self):
        with pytest.raises(ValueError):
            integrate_ode(lambda t, y: y, [1.0], TimeGrid.uniform(1.0, 2), "sideways")

    def test_bit_identical_repeat(self):
        grid = TimeGrid.uniform(1.0, 50)
        rhs = lambda t, y: np.sin(t) * y + np.cos(y)
        a = integrate_ode(rhs, [0.2, 0.4], grid).values
        b = integrate_ode(rhs, [0.2, 0.4], grid).values
        assert a.tobytes() == b.tobytes()

    def test_fourth_order(self):
        errs = [abs(integrate_ode(lambda t, y: -y * t, [1.0], TimeGrid.uniform(2.0, n)).final[0] - np.exp(-2.0))
                for n in (20, 40)]
        assert errs[0] / errs[1] > 14


class TestQuadrature:
    def test_constant(self):
        g = TimeGrid.uniform(2.0, 7)
        assert quad_trapezoid(SampledPath(g, np.ones(8))) == pytest.approx(2.0, abs=1e-15)

    def test_linear_exact(self):
        g = TimeGrid.uniform(1.0, 9)
        assert quad_trapezoid(SampledPath(g, g.nodes)) == pytest.approx(0.5, abs=1e-15)

    def test_square(self):
        g = TimeGrid.uniform(1.0, 1000)
        assert abs(quad_trapezoid(SampledPath(g, g.nodes**2)) - 1 / 3) <= 1e-6

    @pytest.mark.parametrize("fn, exact", [(np.square, 1 / 3), (np.sin, 1 - np.cos(1.0))])
    def test_second_order(self, fn, exact):
        errs = []
        for n in (50, 100):
            g = TimeGrid.uniform(1.0, n)
            errs.append(abs(quad_trapezoid(SampledPath(g, fn(g.nodes))) - exact))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.01)

    def test_nonuniform_grid(self):
        g = TimeGrid([0.0, 0.1, 0.7, 1.0])
        assert quad_trapezoid(SampledPath(g, 3 * g.nodes + 1)) == pytest.approx(2.5)

    def test_rejects_vector_and_nonfinite(self):
        g = TimeGrid.uniform(1.0, 2)
        with pytest.raises(ValueError):
            quad_trapezoid(SampledPath(g, np.ones((3, 2))))
        with pytest.raises(ValueError):
            quad_trapezoid(SampledPath(g, [0.0, np.nan, 1.0]))

    def test_2d_unit_box_and_zero(self):
        t, s = TimeGrid.uniform(1.0, 5), SGrid.uniform(3)
        assert quad_2d(np.ones((6, 4)), t, s) == pytest.approx(1.0)
        assert quad_2d(np.zeros((6, 4)), t, s) == 0.0

    def test_2d_product(self):
        t, s = TimeGrid.uniform(1.0, 200), SGrid.uniform(200)
        assert abs(quad_2d(np.outer(t.nodes, s.nodes), t, s) - 0.25) <= 1e-6

    def test_2d_shape_mismatch(self):
        with pytest.raises(ValueError):
            quad_2d(np.ones((4, 4)), TimeGrid.uniform(1.0, 5), SGrid.uniform(3))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=30), st.floats(-5, 5), st.floats(-5, 5))
def test_trapezoid_linear_in_samples(values, a, b):
    g = TimeGrid.uniform(1.0, len(values) - 1)
    v = np.array(values)
    lhs = quad_trapezoid(SampledPath(g, a * v + b))
    rhs = a * quad_trapezoid(SampledPath(g, v)) + b
    assert lhs == pytest.approx(rhs, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=20))
def test_trapezoid_exact_on_affine_any_grid(steps):
    g = TimeGrid(np.concatenate([[0.0], np.cumsum(steps)]))
    assert quad_trapezoid(SampledPath(g, 2 * g.nodes - 1)) == pytest.approx(g.end**2 - g.end, abs=1e-10)
