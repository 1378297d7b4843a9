"""Needle variations, their labour ``W(eps)``, and pointwise maximum-principle certificates.

A needle replaces ``u_o`` by a constant ``omega`` on ``[tau - eps, tau)``. The
labour of the linear homotopy from ``u_o`` to the (smoothed) needle is
``W(eps)``; its slope at ``eps = 0`` equals the Hamiltonian gap
``H(tau, q, p, u_o(tau)) - H(tau, q, p, omega)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .labour import lift_homotopy, linear_homotopy, two_dim_labour
from .lift import lift_p_optimal
from .numerics import SGrid
from .problem import ControlSignal, MayerProblem, eval_hamiltonian

DEFAULT_SMOOTHING = 0.05
DEFAULT_LADDER = (0.08, 0.04, 0.02, 0.01)
DEFAULT_TOLERANCE = 1e-6
WINDOW_NODES = 4
RAMP_INTERVALS = 16
TIE_TOL = 1e-9


@dataclass(frozen=True)
class NeedleSpec:
    tau: float
    omega: np.ndarray
    epsilon: float
    smoothing: float = DEFAULT_SMOOTHING

    def __post_init__(self):
        object.__setattr__(self, "omega", np.atleast_1d(np.asarray(self.omega, dtype=float)))
        if not self.epsilon > 0:
            raise ValueError("needle width epsilon must be positive; W(eps) is undefined at eps = 0")
        if self.tau - self.epsilon < 0:
            raise ValueError(f"needle window starts before t=0 (tau - eps = {self.tau - self.epsilon:g})")
        if not 0.0 < self.smoothing < 1.0:
            raise ValueError("smoothing fraction must lie in (0, 1)")

    @property
    def start(self) -> float:
        return self.tau - self.epsilon


def _check_spec(problem: Optional[MayerProblem], u_o: ControlSignal, spec: NeedleSpec) -> None:
    if spec.tau > u_o.grid.end:
        raise ValueError("needle time lies beyond the horizon")
    if spec.omega.shape != (u_o.dim,):
        raise ValueError("needle value has the wrong dimension")
    if problem is not None and not problem.control_set.contains(spec.omega):
        raise ValueError(f"needle value {spec.omega} is not in the control set")


def make_needle(u_o: ControlSignal, spec: NeedleSpec) -> ControlSignal:
    """Piecewise-constant needle: ``omega`` on ``[tau - eps, tau)``, ``u_o`` elsewhere.

    The grid is refined so that both window ends are nodes and the window
    holds at least four nodes.
    """
    _check_spec(None, u_o, spec)
    grid = u_o.grid.with_nodes([spec.start, spec.tau])
    inside = (grid.nodes >= spec.start) & (grid.nodes < spec.tau)
    if inside.sum() < WINDOW_NODES:
        grid = grid.with_nodes(np.linspace(spec.start, spec.tau, WINDOW_NODES + 1))
    # left values of u_o on each interval, so a piecewise-linear u_o is held at its node values
    samples = np.array(u_o(grid.nodes))
    inside = (grid.nodes >= spec.start - 1e-15) & (grid.nodes < spec.tau - 1e-15)
    samples[inside] = spec.omega
    return ControlSignal(grid, samples, "piecewise-constant-left")


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def needle_profile(t, spec: NeedleSpec):
    """Weight in [0, 1] of ``omega`` in the smoothed needle at times ``t``."""
    width = spec.smoothing * spec.epsilon
    up = _smoothstep((np.asarray(t) - (spec.start - 0.5 * width)) / width)
    down = _smoothstep((np.asarray(t) - (spec.tau - 0.5 * width)) / width)
    return up - down


def smooth_needle(u_o: ControlSignal, spec: NeedleSpec) -> ControlSignal:
    """Needle with both jumps replaced by C^1 cubic ramps of width ``k * eps``.

    The ramps are centred on ``tau - eps`` and ``tau`` and resolved by
    inserted grid nodes; the result interpolates piecewise-linearly and stays
    on the segment between ``u_o(t)`` and ``omega``.
    """
    _check_spec(None, u_o, spec)
    width = spec.smoothing * spec.epsilon
    extra = [np.linspace(c - 0.5 * width, c + 0.5 * width, RAMP_INTERVALS + 1)
             for c in (spec.start, spec.tau)]
    extra.append(np.linspace(spec.start, spec.tau, WINDOW_NODES + 1))
    grid = u_o.grid.with_nodes(np.concatenate(extra))
    base = u_o(grid.nodes)
    phi = needle_profile(grid.nodes, spec)[:, None]
    return ControlSignal(grid, base + phi * (spec.omega - base), "piecewise-linear")


def needle_labour_W(problem: MayerProblem, u_o: ControlSignal, spec: NeedleSpec,
                    sgrid: Optional[SGrid] = None) -> float:
    """Two-dimensional labour of the p-optimal linear homotopy from ``u_o`` to its smoothed needle."""
    _check_spec(problem, u_o, spec)
    needle = smooth_needle(u_o, spec)
    base = u_o.resample(needle.grid)
    if u_o.interpolation != "piecewise-linear":
        base = ControlSignal(needle.grid, base.samples, "piecewise-linear")
    surface = lift_homotopy(problem, linear_homotopy(base, needle, sgrid), "p-optimal")
    return two_dim_labour(problem, surface)


@dataclass(frozen=True, eq=False)
class NeedleDerivative:
    """Extrapolated slope of ``W`` at zero together with the ladder it came from."""

    estimate: float
    epsilons: np.ndarray
    labours: np.ndarray
    quotients: np.ndarray
    extrapolants: np.ndarray
    consistent: bool


def _neville_at_zero(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Successive polynomial extrapolants to x = 0 (last entry uses every point)."""
    table = list(y.astype(float))
    out = [table[-1]]
    n = len(x)
    for m in range(1, n):
        table = [
            (x[i + m] * table[i] - x[i] * table[i + 1]) / (x[i + m] - x[i])
            for i in range(n - m)
        ]
        out.append(table[-1])
    return np.array(out)


def needle_derivative(problem: MayerProblem, u_o: ControlSignal, tau: float, omega,
                      epsilon_ladder: Optional[Sequence[float]] = None,
                      smoothing: float = DEFAULT_SMOOTHING,
                      sgrid: Optional[SGrid] = None) -> NeedleDerivative:
    """Estimate ``dW/deps`` at zero from ``W(eps)/eps`` along a ladder of widths.

    Uses ``W(0) = 0`` and Richardson (polynomial) extrapolation of the
    quotients to ``eps = 0``. ``consistent`` is False when the last two
    extrapolants disagree by more than 1e-3 (relative to ``max(1, |estimate|)``)
    or the ladder is not strictly decreasing.
    """
    T = u_o.grid.end
    ladder = np.asarray(
        epsilon_ladder if epsilon_ladder is not None else [e * T for e in DEFAULT_LADDER], dtype=float
    )
    if ladder.size < 1 or np.any(ladder <= 0):
        raise ValueError("epsilon ladder must hold positive widths")
    decreasing = bool(np.all(np.diff(ladder) < 0))
    labours = np.array([
        needle_labour_W(problem, u_o, NeedleSpec(tau, omega, eps, smoothing), sgrid) for eps in ladder
    ])
    quotients = labours / ladder
    extrap = _neville_at_zero(ladder, quotients)
    estimate = float(extrap[-1])
    spread = abs(extrap[-1] - extrap[-2]) if extrap.size > 1 else 0.0
    consistent = decreasing and spread <= 1e-3 * max(1.0, abs(estimate))
    return NeedleDerivative(estimate, ladder, labours, quotients, extrap, consistent)


# ------------------------------------------------------------------ certificate


@dataclass(frozen=True, eq=False)
class PmpCertificate:
    """Hamiltonian gaps on a ``(tau, omega)`` scan and the resulting verdict."""

    tau_grid: np.ndarray
    omega_samples: np.ndarray
    gaps: np.ndarray              # (n_tau, n_omega)
    tolerance: float
    witness: Optional[tuple] = field(default=None)

    @property
    def min_gap(self) -> float:
        return float(self.gaps.min())

    @property
    def verdict(self) -> str:
        return "refuted" if self.min_gap < -self.tolerance else "certified"

    @property
    def certified(self) -> bool:
        return self.verdict == "certified"

    def rows(self):
        """Yield ``(tau, omega, gap)`` in scan order."""
        for i, tau in enumerate(self.tau_grid):
            for k, om in enumerate(self.omega_samples):
                yield float(tau), om, float(self.gaps[i, k])


def _omega_order(omegas: np.ndarray) -> np.ndarray:
    return np.lexsort(omegas.T[::-1])


def pmp_certificate(problem: MayerProblem, u_o: ControlSignal, tau_count: int = 50,
                    omega_samples=None, tolerance: float = DEFAULT_TOLERANCE,
                    omega_density: int = 9) -> PmpCertificate:
    """Check ``H(tau, q, p, u_o(tau)) >= H(tau, q, p, omega)`` on a scan.

    ``u_o`` is lifted p-optimally once, on its grid refined to contain every
    scan time; the gap is then evaluated directly on ``tau_count`` equally spaced times in ``[0, T]`` and on ``omega_samples``
    (default: every point of a finite control set, or a lattice of
    ``omega_density`` points per axis plus corners for a box).
    """
    if tau_count < 2:
        raise ValueError("tau_count must be at least 2")
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    if omega_samples is None:
        omega_samples = problem.control_set.scan_points(omega_density)
    omegas = np.asarray(omega_samples, dtype=float)
    if omegas.ndim == 1:
        omegas = omegas[:, None]
    omegas = omegas[_omega_order(omegas)]

    taus = np.linspace(0.0, u_o.grid.end, tau_count)
    # lift on a grid containing every tau so q and p are read at nodes, not interpolated
    signal = u_o.resample(u_o.grid.with_nodes(taus))
    curve = lift_p_optimal(problem, signal)
    gaps = np.empty((tau_count, len(omegas)))
    for i, tau in enumerate(taus):
        j = signal.grid.index_of(tau)
        q, p = curve.q.values[j], curve.p.values[j]
        h_o = eval_hamiltonian(problem, tau, q, p, u_o(tau))
        h_w = eval_hamiltonian(problem, tau, q[None, :], p[None, :], omegas)
        gaps[i] = h_o - h_w

    cert = PmpCertificate(taus, omegas, gaps, tolerance)
    if cert.verdict == "refuted":
        # first in (tau, lexicographic omega) order attaining the minimum up to roundoff
        low = gaps.min()
        flat = int(np.flatnonzero(gaps.ravel() <= low + TIE_TOL * (1.0 + abs(low)))[0])
        i, k = divmod(flat, gaps.shape[1])
        cert = PmpCertificate(taus, omegas, gaps, tolerance, (float(taus[i]), omegas[k].copy()))
    return cert
