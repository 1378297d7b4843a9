"""Control homotopies, their lifted surfaces, and the labour integrals.

For a homotopy ``u(t, s)`` between two controls the cost difference splits as

    delta_I = endpoint_labour + two_dim_labour

with ``two_dim_labour = -iint dH/du . du/ds dt ds``. Along p-optimal lifts the
endpoint labour vanishes, so the cost difference is carried entirely by the
double integral.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .lift import (
    CostForm,
    LiftedCurve,
    _t_column,
    backward_costate_batch,
    cost_line_integral,
    forward_costate_batch,
    forward_state_batch,
    lift_p_optimal,
)
from .numerics import IntegrationError, SampledPath, SGrid, TimeGrid, quad_2d, quad_trapezoid
from .problem import ControlPair, ControlSignal, MayerProblem, eval_hamiltonian_du

MODES = ("p-optimal", "fixed-b")
P_OPTIMAL_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class ControlHomotopy:
    """Controls ``u(t_i, s_j)`` sampled on ``tgrid x sgrid``; ``u_values`` is ``(n_t, n_s, M)``."""

    tgrid: TimeGrid
    sgrid: SGrid
    u_values: np.ndarray
    interpolation: str = "piecewise-linear"

    def __post_init__(self):
        u = np.asarray(self.u_values, dtype=float)
        if u.ndim != 3 or u.shape[:2] != (len(self.tgrid), len(self.sgrid)):
            raise ValueError(
                f"u_values must have shape ({len(self.tgrid)}, {len(self.sgrid)}, M), got {u.shape}"
            )
        u.setflags(write=False)
        object.__setattr__(self, "u_values", u)

    def slice(self, j: int) -> ControlSignal:
        return ControlSignal(self.tgrid, self.u_values[:, j], self.interpolation)

    def du_ds(self) -> np.ndarray:
        """``du/ds`` by central differences in s (one-sided at s = 0, 1)."""
        s = self.sgrid.nodes
        ds = np.diff(s)
        # scalar spacing on uniform grids keeps differences of a constant exactly zero
        spacing = ds[0] if np.allclose(ds, ds[0], rtol=1e-12, atol=0.0) else s
        return np.gradient(self.u_values, spacing, axis=1)

    def rescaled(self, lam: float, sgrid: Optional[SGrid] = None) -> "ControlHomotopy":
        """The homotopy ``u(t, lam * s)``, linearly interpolated in s."""
        sgrid = self.sgrid if sgrid is None else sgrid
        target = lam * sgrid.nodes
        s = self.sgrid.nodes
        j = np.clip(np.searchsorted(s, target, side="right") - 1, 0, s.size - 2)
        w = ((target - s[j]) / (s[j + 1] - s[j]))[None, :, None]
        u = (1.0 - w) * self.u_values[:, j] + w * self.u_values[:, j + 1]
        return ControlHomotopy(self.tgrid, sgrid, u, self.interpolation)


def linear_homotopy(u0: ControlSignal, u1: ControlSignal, sgrid: Optional[SGrid] = None) -> ControlHomotopy:
    """``u(t, s) = (1 - s) u0(t) + s u1(t)``."""
    sgrid = SGrid.uniform() if sgrid is None else sgrid
    if u0.grid != u1.grid:
        raise ValueError("homotopy endpoints must share a time grid")
    if u0.dim != u1.dim:
        raise ValueError("homotopy endpoints have different control dimensions")
    if u0.interpolation != u1.interpolation:
        raise ValueError("homotopy endpoints use different interpolation modes")
    s = sgrid.nodes[None, :, None]
    # u0 + s (u1 - u0) keeps a degenerate homotopy exactly constant in s
    u = u0.samples[:, None, :] + s * (u1.samples - u0.samples)[:, None, :]
    return ControlHomotopy(u0.grid, sgrid, u, u0.interpolation)


@dataclass(frozen=True, eq=False)
class HomotopySurface:
    """Lifted homotopy: ``q``, ``p`` of shape ``(n_t, n_s, N)``."""

    homotopy: ControlHomotopy
    q: np.ndarray
    p: np.ndarray
    mode: str
    problem: MayerProblem

    @property
    def endpoint_curve_0(self):
        return self.q[0], self.p[0]

    @property
    def endpoint_curve_T(self):
        return self.q[-1], self.p[-1]

    def lift(self, j: int) -> LiftedCurve:
        h = self.homotopy
        pair = ControlPair(h.slice(j), self.problem.initial_state, self.p[0, j])
        return LiftedCurve(h.tgrid, SampledPath(h.tgrid, self.q[:, j]),
                           SampledPath(h.tgrid, self.p[:, j]), pair)

    @property
    def lifts(self) -> list:
        return [self.lift(j) for j in range(len(self.homotopy.sgrid))]

    def hamiltonian_du(self) -> np.ndarray:
        """``dH/du`` at every ``(t_i, s_j)`` node, shape ``(n_t, n_s, M)``."""
        h = self.homotopy
        return eval_hamiltonian_du(self.problem, _t_column(h.tgrid.nodes, self.q),
                                   self.q, self.p, h.u_values)


def _check_admissible(problem: MayerProblem, homotopy: ControlHomotopy) -> None:
    u = homotopy.u_values
    if np.any(~problem.enclosing_convex.contains(u)):
        raise ValueError("homotopy leaves the enclosing convex set")
    for j in (0, -1):
        end = u[:, j]
        if problem.control_set.kind == "box":
            ok = bool(np.all(problem.control_set.box.contains(end)))
        else:
            ok = all(problem.control_set.contains(v) for v in np.unique(end, axis=0))
        if not ok:
            raise ValueError(f"homotopy endpoint s={homotopy.sgrid.nodes[j]:g} takes values outside K")


def lift_homotopy(problem: MayerProblem, homotopy: ControlHomotopy, mode: str = "p-optimal",
                  b=None) -> HomotopySurface:
    """Lift every s-slice of a homotopy in one batched sweep.

    In ``"p-optimal"`` mode each slice gets the costate fixed by the terminal
    condition. In ``"fixed-b"`` mode ``b`` (shape ``(N,)`` or ``(n_s, N)``;
    zero by default) is used as the initial costate of every slice.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    _check_admissible(problem, homotopy)
    h = homotopy
    args = (problem, h.tgrid, h.u_values, h.interpolation)
    try:
        q = forward_state_batch(*args)
        if mode == "p-optimal":
            p = backward_costate_batch(*args, q)
        else:
            b = np.zeros(problem.state_dim) if b is None else np.asarray(b, dtype=float)
            p = forward_costate_batch(*args, q, np.broadcast_to(b, q.shape[1:]))
    except IntegrationError as exc:
        raise _locate_failure(problem, homotopy, mode, b, exc) from exc
    return HomotopySurface(homotopy, q, p, mode, problem)


def _locate_failure(problem, homotopy, mode, b, exc) -> IntegrationError:
    for j, s in enumerate(homotopy.sgrid.nodes):
        sig = homotopy.slice(j)
        try:
            q = forward_state_batch(problem, sig.grid, sig.samples, sig.interpolation)
            if mode == "p-optimal":
                backward_costate_batch(problem, sig.grid, sig.samples, sig.interpolation, q)
        except IntegrationError as inner:
            return IntegrationError(f"lift failed at s-node {j} (s={s:g}): {inner}", inner.node, inner.time)
    return IntegrationError(str(exc), exc.node, exc.time)


def endpoint_labour(problem: MayerProblem, surface: HomotopySurface) -> float:
    """Endpoint labour from the reduced integrand ``(p(T,s) + dC/dq(T, q(T,s))) . dq(T,s)/ds``."""
    q0, _ = surface.endpoint_curve_0
    if not np.allclose(q0, problem.initial_state, rtol=0.0, atol=1e-14):
        raise ValueError("surface slices do not share the problem's initial state")
    s = surface.homotopy.sgrid
    qT, pT = surface.endpoint_curve_T
    dq_ds = np.gradient(qT, s.nodes, axis=0)
    integrand = np.sum((pT + problem.cost_q(surface.homotopy.tgrid.end, qT)) * dq_ds, axis=-1)
    return quad_trapezoid(SampledPath(s, integrand))


_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(4)


def _curve_integral(form: CostForm, s_nodes, t, q, p, u) -> float:
    """Integral of ``form`` along a curve sampled over s (cubic splines + 4-point Gauss)."""
    splines = [CubicSpline(s_nodes, arr, axis=0) for arr in (t, q, p, u)]
    a, b = s_nodes[:-1], s_nodes[1:]
    xs = (0.5 * (b - a)[:, None] * _GAUSS_X[None, :] + 0.5 * (a + b)[:, None]).ravel()
    ws = (0.5 * (b - a)[:, None] * _GAUSS_W[None, :]).ravel()
    tt, qq, pp, uu = (sp(xs) for sp in splines)
    dt, dq, dp = (sp(xs, 1) for sp in splines[:3])
    return float(np.sum(ws * form(tt, qq, pp, uu, dt, dq, dp)))


def endpoint_labour_direct(problem: MayerProblem, surface: HomotopySurface) -> float:
    """Endpoint labour as the difference of full 1-form integrals along the two endpoint curves.

    An independent discretisation of :func:`endpoint_labour`: the curves are
    spline-interpolated in s and integrated with Gauss quadrature, and no
    term of the form is dropped in advance.
    """
    h = surface.homotopy
    s = h.sgrid.nodes
    form = CostForm(problem)
    total = 0.0
    for sign, i in ((1.0, -1), (-1.0, 0)):
        t = np.full(s.size, h.tgrid.nodes[i])
        total += sign * _curve_integral(form, s, t, surface.q[i], surface.p[i], h.u_values[i])
    return total


def two_dim_labour(problem: MayerProblem, surface: HomotopySurface) -> float:
    """``-iint dH/du . du/ds dt ds`` over the lifted surface."""
    h = surface.homotopy
    integrand = -np.sum(surface.hamiltonian_du() * h.du_ds(), axis=-1)
    return quad_2d(integrand, h.tgrid, h.sgrid)


@dataclass(frozen=True)
class LabourReport:
    endpoint_labour: float
    two_dim_labour: float
    cost_U: float
    cost_Uo: float
    delta_I: float
    stokes_residual: float

    def as_record(self) -> dict:
        return asdict(self)


def stokes_report(problem: MayerProblem, surface: HomotopySurface) -> LabourReport:
    """Both sides of the cost-difference identity for a lifted homotopy."""
    C = endpoint_labour(problem, surface)
    W = two_dim_labour(problem, surface)
    cost_o = cost_line_integral(problem, surface.lift(0))
    cost_1 = cost_line_integral(problem, surface.lift(len(surface.homotopy.sgrid) - 1))
    delta = cost_1 - cost_o
    return LabourReport(C, W, cost_1, cost_o, delta, delta - (C + W))


@dataclass(frozen=True, eq=False)
class LabourFunction:
    lambdas: np.ndarray
    values: np.ndarray


def _s_marginal(surface: HomotopySurface) -> np.ndarray:
    # g(s) = int dH/du . du/ds dt for every s-node
    h = surface.homotopy
    integrand = np.sum(surface.hamiltonian_du() * h.du_ds(), axis=-1)
    return np.trapezoid(integrand, h.tgrid.nodes, axis=0)


def labour_function(problem: MayerProblem, homotopy: ControlHomotopy, lambdas,
                    surface: Optional[HomotopySurface] = None) -> LabourFunction:
    """Labour of the rescaled homotopies ``u(t, lam s)`` for each ``lam`` in ``lambdas``.

    Substituting ``s' = lam s`` turns each value into ``-int_0^lam g(s') ds'``
    where ``g`` is the t-integral of ``dH/du . du/ds`` on the fine s-grid;
    ``g`` is taken piecewise linear between s-nodes, so no re-lifting occurs.
    """
    if surface is None:
        surface = lift_homotopy(problem, homotopy, "p-optimal")
    elif surface.mode != "p-optimal":
        raise ValueError("the labour function is defined for p-optimal surfaces")
    lambdas = np.asarray(getattr(lambdas, "nodes", lambdas), dtype=float)
    if np.any((lambdas < 0) | (lambdas > 1)):
        raise ValueError("lambda values must lie in [0, 1]")
    s = homotopy.sgrid.nodes
    g = _s_marginal(surface)
    cumulative = np.concatenate([[0.0], np.cumsum(0.5 * (g[1:] + g[:-1]) * np.diff(s))])
    values = np.empty_like(lambdas)
    for k, lam in enumerate(lambdas):
        if lam == 0.0:
            values[k] = 0.0
            continue
        j = min(int(np.searchsorted(s, lam, side="right")) - 1, s.size - 2)
        x = lam - s[j]
        slope = (g[j + 1] - g[j]) / (s[j + 1] - s[j])
        partial = g[j] * x + 0.5 * slope * x * x
        values[k] = -(cumulative[j] + partial)
    return LabourFunction(lambdas, values)


def labour_derivative_at_zero(problem: MayerProblem, homotopy: ControlHomotopy) -> float:
    """``-int dH/du(gamma_o(t), u_o(t)) . Y(t) dt`` with ``Y = du/ds`` at s = 0."""
    base = lift_p_optimal(problem, homotopy.slice(0))
    s = homotopy.sgrid.nodes
    Y = (homotopy.u_values[:, 1] - homotopy.u_values[:, 0]) / (s[1] - s[0])
    t = homotopy.tgrid.nodes
    hu = eval_hamiltonian_du(problem, t, base.q.values, base.p.values, homotopy.u_values[:, 0])
    return -quad_trapezoid(SampledPath(homotopy.tgrid, np.sum(hu * Y, axis=-1)))


def stationarity_check(problem: MayerProblem, signal: ControlSignal) -> float:
    """Sup-norm of ``dH/du`` along the p-optimal lift of ``signal``."""
    curve = lift_p_optimal(problem, signal)
    hu = eval_hamiltonian_du(problem, signal.grid.nodes, curve.q.values, curve.p.values, signal.samples)
    return float(np.max(np.abs(hu)))
