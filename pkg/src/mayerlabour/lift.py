"""State/costate lifts of control signals and the cost 1-form.

A control ``u`` and initial data ``(a, b)`` determine the curve
``t -> (t, q(t), p(t))`` solving

    q' =  F(t, q, u(t)),          q(0) = a
    p' = -p . dF/dq(t, q, u(t)),  p(0) = b   (or p(T) = -dC/dq(T, q(T)))

The batched helpers at the bottom integrate many controls at once; they are
what the homotopy code uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import SampledPath, TimeGrid, quad_trapezoid, rk4_sweep
from .problem import ControlPair, ControlSignal, MayerProblem, eval_hamiltonian, stage_controls

P_OPTIMAL_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class LiftedCurve:
    """Sampled solution ``(t, q(t), p(t))`` of the extended system."""

    grid: TimeGrid
    q: SampledPath
    p: SampledPath
    source: ControlPair

    @property
    def signal(self) -> ControlSignal:
        return self.source.signal

    def terminal_residual(self, problem: MayerProblem) -> float:
        """``max |p(T) + dC/dq(T, q(T))|``."""
        T = self.grid.end
        return float(np.max(np.abs(self.p.final + problem.cost_q(T, self.q.final))))

    def is_p_optimal(self, problem: MayerProblem, tol: float = P_OPTIMAL_TOL) -> bool:
        return self.source.in_fixed_start_class(problem) and self.terminal_residual(problem) <= tol


class CostForm:
    """The 1-form ``p dq - H dt + dC/dt dt + dC/dq dq`` for a given problem.

    ``H`` depends on the control, so coefficients are evaluated with the
    control value attached to each point.
    """

    def __init__(self, problem: MayerProblem):
        self.problem = problem

    def coefficients(self, t, q, p, u):
        """Return ``(dt-coefficient, dq-coefficients, dp-coefficients)`` at the given points."""
        pr = self.problem
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        a_t = -eval_hamiltonian(pr, t, q, p, u) + pr.cost_t(t, q)
        a_q = p + pr.cost_q(t, q)
        a_p = np.zeros_like(p)
        return a_t, a_q, a_p

    def __call__(self, t, q, p, u, dt, dq, dp):
        """Evaluate the form on tangent vectors ``(dt, dq, dp)``; linear in the tangent."""
        a_t, a_q, a_p = self.coefficients(t, q, p, u)
        return (
            a_t * np.asarray(dt, dtype=float)
            + np.sum(a_q * np.asarray(dq, dtype=float), axis=-1)
            + np.sum(a_p * np.asarray(dp, dtype=float), axis=-1)
        )


def _t_column(t, like: np.ndarray):
    """Reshape a 1-D time array so it broadcasts against the leading axes of ``like``."""
    t = np.asarray(t, dtype=float)
    return t.reshape(t.shape + (1,) * (like.ndim - 1 - t.ndim))


# ------------------------------------------------------------------ batched core


def forward_state_batch(problem: MayerProblem, grid: TimeGrid, samples: np.ndarray,
                        interpolation: str, a=None) -> np.ndarray:
    """States for control samples of shape ``(n, ..., M)``; returns ``(n, ..., N)``."""
    left, mid, right = stage_controls(samples, interpolation)
    stages = {0.0: left, 0.5: mid, 1.0: right}
    a = problem.initial_state if a is None else np.asarray(a, dtype=float)
    q0 = np.broadcast_to(a, samples.shape[1:-1] + (problem.state_dim,))

    def rhs(i, c, t, q):
        return problem.f(t, q, stages[c][i])

    return rk4_sweep(rhs, q0, grid.nodes)


def _costate_rhs(problem: MayerProblem, grid: TimeGrid, samples: np.ndarray,
                 interpolation: str, q: np.ndarray):
    left, mid, right = stage_controls(samples, interpolation)
    nodes = grid.nodes
    h = np.diff(nodes)
    # cubic Hermite midpoint of q on each step (fourth-order, matches RK4)
    f_left = problem.f(_t_column(nodes[:-1], q[:-1]), q[:-1], left)
    f_right = problem.f(_t_column(nodes[1:], q[1:]), q[1:], right)
    q_mid = 0.5 * (q[:-1] + q[1:]) + _t_column(h, q[:-1])[..., None] / 8.0 * (f_left - f_right)
    q_stage = {0.0: q[:-1], 0.5: q_mid, 1.0: q[1:]}
    u_stage = {0.0: left, 0.5: mid, 1.0: right}

    def rhs(i, c, t, p):
        fq = problem.f_q(t, q_stage[c][i], u_stage[c][i])
        return -np.einsum("...n,...nk->...k", p, fq)

    return rhs


def backward_costate_batch(problem, grid, samples, interpolation, q) -> np.ndarray:
    """Costates seeded with ``p(T) = -dC/dq(T, q(T))`` and integrated backward."""
    pT = -problem.cost_q(grid.end, q[-1])
    rhs = _costate_rhs(problem, grid, samples, interpolation, q)
    return rk4_sweep(rhs, pT, grid.nodes, backward=True)


def forward_costate_batch(problem, grid, samples, interpolation, q, b) -> np.ndarray:
    """Costates integrated forward from ``p(0) = b``."""
    b = np.broadcast_to(np.asarray(b, dtype=float), q.shape[1:])
    rhs = _costate_rhs(problem, grid, samples, interpolation, q)
    return rk4_sweep(rhs, b, grid.nodes)


# ------------------------------------------------------------------- public API


def forward_state(problem: MayerProblem, signal: ControlSignal) -> SampledPath:
    """State trajectory from the problem's initial state under ``signal``."""
    problem.check_signal(signal)
    q = forward_state_batch(problem, signal.grid, signal.samples, signal.interpolation)
    return SampledPath(signal.grid, q)


def backward_costate(problem: MayerProblem, signal: ControlSignal, q_path: SampledPath) -> SampledPath:
    """Costate pinned by the terminal condition ``p(T) = -dC/dq(T, q(T))``."""
    if q_path.grid != signal.grid:
        raise ValueError("state path and control signal live on different grids")
    p = backward_costate_batch(problem, signal.grid, signal.samples, signal.interpolation,
                               np.asarray(q_path.values))
    return SampledPath(signal.grid, p)


def lift_p_optimal(problem: MayerProblem, signal: ControlSignal) -> LiftedCurve:
    """Lift with the unique initial costate satisfying the terminal condition.

    Solves for ``q`` forward, then for ``p`` backward from its terminal value;
    ``b`` is read off as ``p(0)``.
    """
    q = forward_state(problem, signal)
    p = backward_costate(problem, signal, q)
    pair = ControlPair(signal, problem.initial_state, p.initial.copy())
    return LiftedCurve(signal.grid, q, p, pair)


def lift_with_initial_costate(problem: MayerProblem, signal: ControlSignal, b) -> LiftedCurve:
    """Lift with a prescribed initial costate ``p(0) = b``."""
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if b.shape != (problem.state_dim,):
        raise ValueError(f"initial costate must have shape ({problem.state_dim},)")
    q = forward_state(problem, signal)
    p = forward_costate_batch(problem, signal.grid, signal.samples, signal.interpolation,
                              np.asarray(q.values), b)
    pair = ControlPair(signal, problem.initial_state, b)
    return LiftedCurve(signal.grid, q, SampledPath(signal.grid, p), pair)


def terminal_cost_value(problem: MayerProblem, q_path: SampledPath) -> float:
    """``C(T, q(T))``."""
    return float(problem.cost(q_path.grid.end, q_path.final))


def cost_line_integral(problem: MayerProblem, curve: LiftedCurve) -> float:
    """Integral of the cost 1-form along a sampled lifted curve.

    Tangents come from finite differences of the samples (central inside,
    one-sided at the ends), so a corrupted curve is integrated as given
    rather than through the ODE.
    """
    t = curve.grid.nodes
    q = np.asarray(curve.q.values)
    p = np.asarray(curve.p.values)
    u = curve.signal(t)
    qdot = np.gradient(q, t, axis=0)
    pdot = np.gradient(p, t, axis=0)
    integrand = CostForm(problem)(t, q, p, u, np.ones_like(t), qdot, pdot)
    return quad_trapezoid(SampledPath(curve.grid, integrand))
