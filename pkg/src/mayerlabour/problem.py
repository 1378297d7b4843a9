"""Mayer problems, control sets and sampled control signals.

Callables supplied to :class:`MayerProblem` follow one broadcasting
convention: ``q`` has shape ``(..., N)`` and ``u`` shape ``(..., M)``, and
``t`` is either a float or an array broadcastable against the leading axes.
So ``dynamics(t, q, u)`` returns ``(..., N)``, ``dynamics_dq`` returns
``(..., N, N)``, ``dynamics_du`` returns ``(..., N, M)``, ``terminal_cost``
returns ``(...)`` and ``terminal_cost_dq`` returns ``(..., N)``. This is what
lets a whole homotopy be lifted in one RK4 sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .numerics import TimeGrid

INTERPOLATIONS = ("piecewise-linear", "piecewise-constant-left")
DERIVATIVE_RTOL = 1e-5


def _fd_step(x):
    return 1e-6 * (1.0 + np.abs(x))


# --------------------------------------------------------------------------- sets


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned box ``lower <= u <= upper``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-D arrays of equal length")
        if np.any(lo > hi):
            raise ValueError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, u, atol: float = 1e-12) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return np.all((u >= self.lower - atol) & (u <= self.upper + atol), axis=-1)

    def corners(self) -> np.ndarray:
        grids = np.meshgrid(*zip(self.lower, self.upper), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def inflated(self, fraction: float = 0.1) -> "Box":
        pad = fraction * np.where(self.upper > self.lower, self.upper - self.lower, 1.0)
        return Box(self.lower - pad, self.upper + pad)

    def lattice(self, density: int) -> np.ndarray:
        axes = [np.linspace(lo, hi, density) if hi > lo else np.array([lo])
                for lo, hi in zip(self.lower, self.upper)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)


@dataclass(frozen=True, eq=False)
class ControlSet:
    """The set ``K`` of admissible control values.

    ``kind`` is one of ``"box"``, ``"finite"`` or ``"predicate"``. A predicate
    set carries a bounding box used for sampling.
    """

    kind: str
    box: Optional[Box] = None
    points: Optional[np.ndarray] = None
    predicate: Optional[Callable[[np.ndarray], bool]] = None

    @classmethod
    def from_box(cls, lower, upper) -> "ControlSet":
        return cls("box", box=Box(lower, upper))

    @classmethod
    def from_points(cls, points) -> "ControlSet":
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("finite control set needs a non-empty (k, M) point array")
        return cls("finite", box=Box(pts.min(axis=0), pts.max(axis=0)), points=pts)

    @classmethod
    def from_predicate(cls, predicate, lower, upper) -> "ControlSet":
        return cls("predicate", box=Box(lower, upper), predicate=predicate)

    def __post_init__(self):
        if self.kind not in ("box", "finite", "predicate"):
            raise ValueError(f"unknown control set kind {self.kind!r}")
        if self.box is None:
            raise ValueError("control set needs a bounding box")

    @property
    def dim(self) -> int:
        return self.box.dim

    def bounding_box(self) -> Box:
        return self.box

    def contains(self, u, atol: float = 1e-12) -> bool:
        u = np.asarray(u, dtype=float)
        if self.kind == "box":
            return bool(self.box.contains(u, atol))
        if self.kind == "finite":
            return bool(np.any(np.all(np.abs(self.points - u) <= atol, axis=-1)))
        return bool(self.box.contains(u, atol)) and bool(self.predicate(u))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "finite":
            return self.points[rng.integers(0, len(self.points), size=n)]
        lo, hi = self.box.lower, self.box.upper
        if self.kind == "box":
            return rng.uniform(lo, hi, size=(n, self.dim))
        out = []
        while len(out) < n:
            cand = rng.uniform(lo, hi, size=(4 * n, self.dim))
            out.extend(c for c in cand if self.predicate(c))
        return np.asarray(out[:n])

    def scan_points(self, density: int = 9) -> np.ndarray:
        """Deterministic probe set: all points of a finite set, else a lattice (corners included)."""
        if self.kind == "finite":
            return self.points.copy()
        pts = np.unique(np.vstack([self.box.lattice(density), self.box.corners()]), axis=0)
        if self.kind == "predicate":
            pts = pts[[bool(self.predicate(p)) for p in pts]]
        return pts


# ------------------------------------------------------------------------ problem


@dataclass(frozen=True, eq=False)
class MayerProblem:
    """Minimise ``C(T, q(T))`` subject to ``q' = F(t, q, u)``, ``q(0) = a0``, ``u(t) in K``.

    Derivative callables are optional; missing ones are replaced by central
    differences with step ``1e-6 * (1 + |x|)``.
    """

    state_dim: int
    control_dim: int
    horizon: float
    dynamics: Callable
    terminal_cost: Callable
    control_set: ControlSet
    initial_state: np.ndarray
    dynamics_dq: Optional[Callable] = None
    dynamics_du: Optional[Callable] = None
    terminal_cost_dq: Optional[Callable] = None
    terminal_cost_dt: Optional[Callable] = None
    enclosing_convex: Optional[Box] = None
    name: str = "problem"

    def __post_init__(self):
        if self.state_dim < 1 or self.control_dim < 1:
            raise ValueError("state and control dimensions must be positive")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        a0 = np.atleast_1d(np.asarray(self.initial_state, dtype=float))
        if a0.shape != (self.state_dim,):
            raise ValueError(f"initial state must have shape ({self.state_dim},)")
        object.__setattr__(self, "initial_state", a0)
        if self.control_set.dim != self.control_dim:
            raise ValueError("control set dimension does not match control_dim")
        if self.enclosing_convex is None:
            object.__setattr__(self, "enclosing_convex", self.control_set.bounding_box().inflated(0.1))

    def time_grid(self, steps: int = 1000) -> TimeGrid:
        return TimeGrid.uniform(self.horizon, steps)

    # derivative accessors with finite-difference fallback

    def f(self, t, q, u):
        return np.asarray(self.dynamics(t, q, u), dtype=float)

    def f_q(self, t, q, u):
        if self.dynamics_dq is not None:
            return np.asarray(self.dynamics_dq(t, q, u), dtype=float)
        q = np.asarray(q, dtype=float)
        cols = []
        for j in range(self.state_dim):
            h = _fd_step(q[..., j])
            dq = np.zeros_like(q)
            dq[..., j] = h
            cols.append((self.f(t, q + dq, u) - self.f(t, q - dq, u)) / (2.0 * h[..., None]))
        return np.stack(cols, axis=-1)

    def f_u(self, t, q, u):
        if self.dynamics_du is not None:
            return np.asarray(self.dynamics_du(t, q, u), dtype=float)
        return self._fd_f_u(t, q, u)

    def _fd_f_u(self, t, q, u):
        u = np.asarray(u, dtype=float)
        cols = []
        for j in range(self.control_dim):
            h = _fd_step(u[..., j])
            du = np.zeros_like(u)
            du[..., j] = h
            cols.append((self.f(t, q, u + du) - self.f(t, q, u - du)) / (2.0 * h[..., None]))
        return np.stack(cols, axis=-1)

    def cost(self, t, q):
        return np.asarray(self.terminal_cost(t, q), dtype=float)

    def cost_q(self, t, q):
        if self.terminal_cost_dq is not None:
            return np.asarray(self.terminal_cost_dq(t, q), dtype=float)
        q = np.asarray(q, dtype=float)
        cols = []
        for j in range(self.state_dim):
            h = _fd_step(q[..., j])
            dq = np.zeros_like(q)
            dq[..., j] = h
            cols.append((self.cost(t, q + dq) - self.cost(t, q - dq)) / (2.0 * h))
        return np.stack(cols, axis=-1)

    def cost_t(self, t, q):
        if self.terminal_cost_dt is not None:
            return np.asarray(self.terminal_cost_dt(t, q), dtype=float)
        t = np.asarray(t, dtype=float)
        h = _fd_step(t)
        return (self.cost(t + h, q) - self.cost(t - h, q)) / (2.0 * h)

    def check_signal(self, signal: "ControlSignal") -> None:
        """Raise ``ValueError`` unless every sample of ``signal`` lies in the enclosing box."""
        if signal.dim != self.control_dim:
            raise ValueError(f"signal has dimension {signal.dim}, problem expects {self.control_dim}")
        bad = ~self.enclosing_convex.contains(signal.samples)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise ValueError(
                f"control sample at t={signal.grid.nodes[i]:.6g} lies outside the enclosing box"
            )


def eval_hamiltonian(problem: MayerProblem, t, q, p, u):
    """``H(t, q, p, u) = p . F(t, q, u)`` (broadcast over leading axes)."""
    f = problem.f(t, q, u)
    if not np.all(np.isfinite(f)):
        raise FloatingPointError("non-finite dynamics value")
    return np.sum(np.asarray(p, dtype=float) * f, axis=-1)


def eval_hamiltonian_du(problem: MayerProblem, t, q, p, u):
    """Gradient of the Hamiltonian in ``u``: ``p^T dF/du``, shape ``(..., M)``."""
    fu = problem.f_u(t, q, u)
    if not np.all(np.isfinite(fu)):
        raise FloatingPointError("non-finite dynamics derivative")
    return np.einsum("...n,...nm->...m", np.asarray(p, dtype=float), fu)


# ------------------------------------------------------------------------ signals


@dataclass(frozen=True, eq=False)
class ControlSignal:
    """Control samples on a time grid plus an interpolation rule.

    ``piecewise-constant-left`` holds sample ``i`` on ``[t_i, t_{i+1})``.
    """

    grid: TimeGrid
    samples: np.ndarray
    interpolation: str = "piecewise-linear"

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        if samples.ndim != 2 or samples.shape[0] != len(self.grid):
            raise ValueError(
                f"expected ({len(self.grid)}, M) samples, got shape {samples.shape}"
            )
        if not np.all(np.isfinite(samples)):
            raise ValueError("control samples must be finite")
        if self.interpolation not in INTERPOLATIONS:
            raise ValueError(f"unknown interpolation {self.interpolation!r}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @classmethod
    def constant(cls, grid: TimeGrid, value, interpolation: str = "piecewise-linear") -> "ControlSignal":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(grid, np.tile(value, (len(grid), 1)), interpolation)

    @classmethod
    def from_function(cls, grid: TimeGrid, fn, interpolation: str = "piecewise-linear") -> "ControlSignal":
        return cls(grid, np.array([np.atleast_1d(fn(t)) for t in grid.nodes], dtype=float), interpolation)

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def __call__(self, t) -> np.ndarray:
        """Evaluate at time(s) ``t``; returns ``(M,)`` or ``(len(t), M)``."""
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        nodes = self.grid.nodes
        if self.interpolation == "piecewise-linear":
            out = np.stack([np.interp(t, nodes, self.samples[:, m]) for m in range(self.dim)], axis=-1)
        else:
            idx = np.clip(np.searchsorted(nodes, t, side="right") - 1, 0, nodes.size - 1)
            out = self.samples[idx]
        return out[0] if scalar else out

    def resample(self, grid: TimeGrid) -> "ControlSignal":
        """Same control on another grid; exact when ``grid`` refines ``self.grid``."""
        return ControlSignal(grid, self(grid.nodes), self.interpolation)

    def stage_values(self):
        """One-sided control values for each RK4 step: ``(left, mid, right)``, each ``(n-1, M)``."""
        return stage_controls(self.samples, self.interpolation)


def stage_controls(samples: np.ndarray, interpolation: str):
    """Per-step control values at ``t_i+``, the midpoint and ``t_{i+1}-``.

    ``samples`` has shape ``(n, ..., M)``; extra axes (a batch of signals) pass through.
    """
    if interpolation == "piecewise-linear":
        left, right = samples[:-1], samples[1:]
        return left, 0.5 * (left + right), right
    held = samples[:-1]
    return held, held, held


@dataclass(frozen=True, eq=False)
class ControlPair:
    """A control curve together with initial state ``a`` and initial costate ``b``."""

    signal: ControlSignal
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", np.atleast_1d(np.asarray(self.a, dtype=float)))
        object.__setattr__(self, "b", np.atleast_1d(np.asarray(self.b, dtype=float)))

    def in_fixed_start_class(self, problem: MayerProblem) -> bool:
        """Whether the pair starts from the problem's prescribed initial state."""
        return bool(np.array_equal(self.a, problem.initial_state))


# --------------------------------------------------------------------- validation


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str

    def __str__(self):
        return f"{self.kind}: {self.message}"


def _mismatch(analytic, numeric) -> float:
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    return float(np.max(np.abs(analytic - numeric) / (1.0 + np.abs(numeric))))


def validate_problem(problem: MayerProblem, probes: int = 100, seed: int = 0) -> list:
    """Check the problem's standing assumptions on a seeded random probe set.

    Returns a list of :class:`Violation`; empty means every check passed.
    """
    rng = np.random.default_rng(seed)
    violations: list[Violation] = []
    n, T = problem.state_dim, problem.horizon
    box = problem.enclosing_convex
    ctrl_box = problem.control_set.bounding_box()

    if not (np.all(box.lower <= ctrl_box.lower) and np.all(ctrl_box.upper <= box.upper)):
        violations.append(Violation("control-set", "control set is not contained in the enclosing box"))
    if problem.control_set.kind == "finite":
        outside = ~box.contains(problem.control_set.points)
        if np.any(outside):
            violations.append(Violation("control-set", "finite control points outside the enclosing box"))

    draws = problem.control_set.sample(rng, probes)
    if np.any(~box.contains(draws)):
        violations.append(Violation("control-set", "sampled control values fall outside the enclosing box"))

    scale = 1.0 + np.abs(problem.initial_state)
    qs = problem.initial_state + scale * rng.uniform(-2.0, 2.0, size=(probes, n))
    ts = rng.uniform(0.0, T, size=probes)
    us = rng.uniform(box.lower, box.upper, size=(probes, problem.control_dim))

    worst = {"C0": 0.0, "F": 0.0, "Fq": 0.0, "Fu": 0.0, "Cq": 0.0, "Ct": 0.0}
    nonfinite = False
    for t, q, u in zip(ts, qs, us):
        c0 = problem.cost(0.0, q)
        f = problem.f(t, q, u)
        if not (np.all(np.isfinite(c0)) and np.all(np.isfinite(f))):
            nonfinite = True
            continue
        worst["C0"] = max(worst["C0"], float(np.max(np.abs(c0))))
        if problem.dynamics_dq is not None:
            fd = _without(problem, "dynamics_dq").f_q(t, q, u)
            worst["Fq"] = max(worst["Fq"], _mismatch(problem.f_q(t, q, u), fd))
        if problem.dynamics_du is not None:
            worst["Fu"] = max(worst["Fu"], _mismatch(problem.f_u(t, q, u), problem._fd_f_u(t, q, u)))
        if problem.terminal_cost_dq is not None:
            fd = _without(problem, "terminal_cost_dq").cost_q(t, q)
            worst["Cq"] = max(worst["Cq"], _mismatch(problem.cost_q(t, q), fd))
        if problem.terminal_cost_dt is not None:
            fd = _without(problem, "terminal_cost_dt").cost_t(t, q)
            worst["Ct"] = max(worst["Ct"], _mismatch(problem.cost_t(t, q), fd))

    if nonfinite:
        violations.append(Violation("non-finite", "dynamics or cost returned non-finite values at probe points"))
    if worst["C0"] > 1e-12:
        violations.append(Violation(
            "initial-cost",
            f"terminal cost must vanish at t=0 (C(0, q) = 0); max |C(0, q)| = {worst['C0']:.3g}",
        ))
    labels = {"Fq": "dF/dq", "Fu": "dF/du", "Cq": "dC/dq", "Ct": "dC/dt"}
    for key, label in labels.items():
        if worst[key] > DERIVATIVE_RTOL:
            violations.append(Violation(
                "derivative-mismatch",
                f"analytic {label} disagrees with central differences (relative error {worst[key]:.3g})",
            ))
    return violations


def _without(problem: MayerProblem, attr: str) -> MayerProblem:
    return replace(problem, **{attr: None})
