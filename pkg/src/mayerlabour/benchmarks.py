"""Built-in Mayer problems with known optima, and a brute-force optimality oracle.

All terminal costs carry a ``t / T`` ramp so that ``C(0, q) = 0`` while
``C(T, .)`` is the intended target function.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .lift import forward_state_batch
from .numerics import DEFAULT_TIME_STEPS, TimeGrid
from .problem import ControlSet, ControlSignal, MayerProblem

ORACLE_GUARD = 10**6
_CHUNK = 4096


@dataclass(frozen=True)
class OracleSpec:
    segment_count: int
    levels: tuple


@dataclass(frozen=True, eq=False)
class BenchmarkProblem:
    name: str
    problem: MayerProblem
    known_optimal: Optional[ControlSignal] = None
    known_optimal_cost: Optional[float] = None
    oracle: Optional[OracleSpec] = None

    def optimal_on(self, grid: TimeGrid) -> ControlSignal:
        if self.known_optimal is None:
            raise ValueError(f"{self.name} has no known optimal control")
        return self.known_optimal.resample(grid)


def _batch_shape(q, u):
    return np.broadcast_shapes(np.shape(q)[:-1], np.shape(u)[:-1])


def _ramp(t, like):
    # t / T as a column broadcastable against a (..., N) array
    return np.asarray(t, dtype=float)[..., None] * np.ones_like(like)


def _single_integrator(name, cost, cost_q, cost_t, a0, T=1.0):
    def f(t, q, u):
        return np.asarray(u, dtype=float) + 0.0 * np.asarray(q, dtype=float)

    def f_q(t, q, u):
        return np.zeros(_batch_shape(q, u) + (1, 1))

    def f_u(t, q, u):
        return np.ones(_batch_shape(q, u) + (1, 1))

    return MayerProblem(
        state_dim=1, control_dim=1, horizon=T, dynamics=f, dynamics_dq=f_q, dynamics_du=f_u,
        terminal_cost=cost, terminal_cost_dq=cost_q, terminal_cost_dt=cost_t,
        control_set=ControlSet.from_box([-1.0], [1.0]), initial_state=[a0], name=name,
    )


def steer_down(T: float = 1.0) -> MayerProblem:
    return _single_integrator(
        "steer-down",
        cost=lambda t, q: q[..., 0] * np.asarray(t) / T,
        cost_q=lambda t, q: _ramp(t, q) / T,
        cost_t=lambda t, q: q[..., 0] / T,
        a0=0.0, T=T,
    )


def quadratic_target(T: float = 1.0) -> MayerProblem:
    return _single_integrator(
        "quadratic-target",
        cost=lambda t, q: 0.5 * q[..., 0] ** 2 * np.asarray(t) / T,
        cost_q=lambda t, q: q * _ramp(t, q) / T,
        cost_t=lambda t, q: 0.5 * q[..., 0] ** 2 / T,
        a0=1.0, T=T,
    )


def double_integrator(T: float = 1.0) -> MayerProblem:
    def f(t, q, u):
        q, u = np.asarray(q, dtype=float), np.asarray(u, dtype=float)
        shape = _batch_shape(q, u)
        return np.stack([np.broadcast_to(q[..., 1], shape), np.broadcast_to(u[..., 0], shape)], axis=-1)

    def f_q(t, q, u):
        return np.broadcast_to(np.array([[0.0, 1.0], [0.0, 0.0]]), _batch_shape(q, u) + (2, 2)).copy()

    def f_u(t, q, u):
        return np.broadcast_to(np.array([[0.0], [1.0]]), _batch_shape(q, u) + (2, 1)).copy()

    def cost_q(t, q):
        out = np.zeros(np.broadcast_shapes(np.shape(t), q.shape[:-1]) + (2,))
        out[..., 0] = np.asarray(t) / T
        return out

    return MayerProblem(
        state_dim=2, control_dim=1, horizon=T, dynamics=f, dynamics_dq=f_q, dynamics_du=f_u,
        terminal_cost=lambda t, q: q[..., 0] * np.asarray(t) / T,
        terminal_cost_dq=cost_q,
        terminal_cost_dt=lambda t, q: q[..., 0] / T,
        control_set=ControlSet.from_box([-1.0], [1.0]), initial_state=[0.0, 0.0],
        name="double-integrator",
    )


def bilinear(T: float = 1.0) -> MayerProblem:
    def f(t, q, u):
        return np.asarray(q, dtype=float) * np.asarray(u, dtype=float)

    def f_q(t, q, u):
        return (np.asarray(u, dtype=float) + 0.0 * np.asarray(q))[..., None]

    def f_u(t, q, u):
        return (np.asarray(q, dtype=float) + 0.0 * np.asarray(u))[..., None]

    return MayerProblem(
        state_dim=1, control_dim=1, horizon=T, dynamics=f, dynamics_dq=f_q, dynamics_du=f_u,
        terminal_cost=lambda t, q: q[..., 0] * np.asarray(t) / T,
        terminal_cost_dq=lambda t, q: _ramp(t, q) / T,
        terminal_cost_dt=lambda t, q: q[..., 0] / T,
        control_set=ControlSet.from_box([-1.0], [1.0]), initial_state=[1.0], name="bilinear",
    )


_BUILDERS = {
    "steer-down": (steer_down, -1.0, lambda T: -T, OracleSpec(3, (-1.0, 0.0, 1.0))),
    "quadratic-target": (quadratic_target, -1.0, lambda T: 0.0, OracleSpec(4, (-1.0, 0.0, 1.0))),
    "double-integrator": (double_integrator, -1.0, lambda T: -0.5 * T**2, None),
    "bilinear": (bilinear, -1.0, lambda T: float(np.exp(-T)), None),
}

BUILTIN_NAMES = tuple(_BUILDERS)


def builtin(name: str, steps: int = DEFAULT_TIME_STEPS) -> BenchmarkProblem:
    """Return one of the built-in benchmark problems by name."""
    try:
        build, u_opt, cost_of, oracle = _BUILDERS[name]
    except KeyError:
        raise ValueError(
            f"unknown builtin problem {name!r}; choose from {', '.join(BUILTIN_NAMES)}"
        ) from None
    problem = build()
    optimal = ControlSignal.constant(problem.time_grid(steps), u_opt)
    return BenchmarkProblem(name, problem, optimal, cost_of(problem.horizon), oracle)


def brute_force_oracle(problem: MayerProblem, segment_count: int, levels,
                       steps_per_segment: Optional[int] = None):
    """Exhaustively minimise the terminal cost over piecewise-constant controls.

    Every control takes one value from ``levels`` on each of ``segment_count``
    uniform segments. Ties are broken toward the lexicographically smallest
    value tuple.

    Returns
    -------
    (ControlSignal, float)
        The minimising control (piecewise-constant-left) and its terminal cost.
    """
    levels = np.asarray(levels, dtype=float)
    if levels.ndim == 1:
        levels = levels[:, None]
    if levels.shape[1] != problem.control_dim:
        raise ValueError("levels do not match the control dimension")
    order = np.lexsort(levels.T[::-1])
    levels = levels[order]
    L = len(levels)
    if segment_count < 1:
        raise ValueError("segment_count must be positive")
    if segment_count * L**segment_count > ORACLE_GUARD:
        raise ValueError(
            f"enumeration of {L}^{segment_count} controls exceeds the guard of {ORACLE_GUARD}"
        )
    if steps_per_segment is None:
        steps_per_segment = -(-DEFAULT_TIME_STEPS // segment_count)
    grid = TimeGrid.uniform(problem.horizon, segment_count * steps_per_segment)
    seg_of_node = np.minimum(np.arange(len(grid)) // steps_per_segment, segment_count - 1)

    best_cost, best_idx = np.inf, None
    combos = itertools.product(range(L), repeat=segment_count)
    while True:
        chunk = list(itertools.islice(combos, _CHUNK))
        if not chunk:
            break
        idx = np.array(chunk)                       # (B, segments)
        samples = levels[idx[:, seg_of_node]]       # (B, n, M)
        samples = np.moveaxis(samples, 0, 1)        # (n, B, M)
        q = forward_state_batch(problem, grid, samples, "piecewise-constant-left")
        costs = problem.cost(grid.end, q[-1])
        low = costs.min()
        tol = 1e-12 * (1.0 + abs(low))
        j = int(np.flatnonzero(costs <= low + tol)[0])
        if costs[j] < best_cost - tol:
            best_cost, best_idx = float(costs[j]), idx[j]

    samples = levels[best_idx[seg_of_node]]
    return ControlSignal(grid, samples, "piecewise-constant-left"), best_cost
