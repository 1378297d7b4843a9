import numpy as np
import pytest

from mayerlabour.problem import ControlSet, MayerProblem


def scalar_problem(cost="linear", dynamics="integrator", a0=0.0, T=1.0, ramp=False,
                   lower=-1.0, upper=1.0, with_derivatives=True):
    """One-state, one-control test problems with closed-form costates.

    dynamics: "integrator" (F = u) or "bilinear" (F = q u).
    cost: "linear" (C = q) or "quadratic" (C = q^2 / 2), optionally ramped by t/T.
    """
    def w(t):
        return np.asarray(t, dtype=float) / T if ramp else 1.0

    if dynamics == "integrator":
        f = lambda t, q, u: np.asarray(u, dtype=float) + 0.0 * np.asarray(q)
        fq = lambda t, q, u: np.zeros(np.broadcast_shapes(np.shape(q), np.shape(u))[:-1] + (1, 1))
        fu = lambda t, q, u: np.ones(np.broadcast_shapes(np.shape(q), np.shape(u))[:-1] + (1, 1))
    else:
        f = lambda t, q, u: np.asarray(q, dtype=float) * np.asarray(u, dtype=float)
        fq = lambda t, q, u: (np.asarray(u, dtype=float) + 0.0 * np.asarray(q))[..., None]
        fu = lambda t, q, u: (np.asarray(q, dtype=float) + 0.0 * np.asarray(u))[..., None]

    if cost == "linear":
        c = lambda t, q: w(t) * q[..., 0]
        cq = lambda t, q: np.asarray(w(t) * np.ones_like(q[..., 0]))[..., None] + 0.0 * q
        ct = lambda t, q: (q[..., 0] / T) if ramp else 0.0 * q[..., 0]
    else:
        c = lambda t, q: w(t) * 0.5 * q[..., 0] ** 2
        cq = lambda t, q: np.asarray(w(t) * np.ones_like(q[..., 0]))[..., None] * q
        ct = lambda t, q: (0.5 * q[..., 0] ** 2 / T) if ramp else 0.0 * q[..., 0]

    kw = dict(dynamics_dq=fq, dynamics_du=fu, terminal_cost_dq=cq, terminal_cost_dt=ct) if with_derivatives else {}
    return MayerProblem(
        state_dim=1, control_dim=1, horizon=T, dynamics=f, terminal_cost=c,
        control_set=ControlSet.from_box([lower], [upper]), initial_state=[a0],
        name=f"{dynamics}-{cost}", **kw,
    )


def double_integrator_raw(T=1.0):
    """F = (q2, u), C = q1 (unramped)."""
    def f(t, q, u):
        q, u = np.asarray(q, dtype=float), np.asarray(u, dtype=float)
        shape = np.broadcast_shapes(q.shape[:-1], u.shape[:-1])
        return np.stack([np.broadcast_to(q[..., 1], shape), np.broadcast_to(u[..., 0], shape)], axis=-1)

    return MayerProblem(
        state_dim=2, control_dim=1, horizon=T, dynamics=f,
        terminal_cost=lambda t, q: q[..., 0],
        control_set=ControlSet.from_box([-1.0], [1.0]), initial_state=[0.0, 0.0],
    )


@pytest.fixture
def steer():
    return scalar_problem("linear", "integrator")


@pytest.fixture
def quad():
    return scalar_problem("quadratic", "integrator", a0=1.0)
