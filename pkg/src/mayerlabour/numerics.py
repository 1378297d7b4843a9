"""Fixed-step integration and trapezoid quadrature on explicit grids.

Every routine here works on sampled data living on a :class:`TimeGrid`
(or an s-grid with the same structure). Nothing is adaptive: the same
inputs always produce bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

DEFAULT_TIME_STEPS = 1000
DEFAULT_S_STEPS = 100

# stage locations of classical RK4 as fractions of a step
_STAGE_FRACTIONS = (0.0, 0.5, 0.5, 1.0)


class IntegrationError(RuntimeError):
    """Raised when a right-hand side returns a non-finite value."""

    def __init__(self, message: str, node: int | None = None, time: float | None = None):
        super().__init__(message)
        self.node = node
        self.time = time


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing nodes ``0 = t_0 < ... < t_N = T``."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("a grid needs at least 2 nodes")
        if not np.all(np.isfinite(nodes)):
            raise ValueError("grid nodes must be finite")
        if nodes[0] != 0.0:
            raise ValueError(f"first grid node must be exactly 0, got {nodes[0]!r}")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("grid nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, end: float, steps: int = DEFAULT_TIME_STEPS) -> "TimeGrid":
        if steps < 1:
            raise ValueError("steps must be >= 1")
        nodes = np.linspace(0.0, float(end), int(steps) + 1)
        nodes[-1] = float(end)
        return cls(nodes)

    @property
    def end(self) -> float:
        return float(self.nodes[-1])

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes)

    def __len__(self) -> int:
        return self.nodes.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return self.nodes.shape == other.nodes.shape and bool(np.all(self.nodes == other.nodes))

    def __hash__(self) -> int:
        return hash(self.nodes.tobytes())

    def with_nodes(self, extra) -> "TimeGrid":
        """Return a grid with ``extra`` nodes inserted (points outside ``[0, T]`` are dropped)."""
        extra = np.atleast_1d(np.asarray(extra, dtype=float))
        extra = extra[(extra >= 0.0) & (extra <= self.end)]
        merged = np.union1d(self.nodes, extra)
        # collapse near-duplicates produced by floating point arithmetic
        keep = np.concatenate([[True], np.diff(merged) > 1e-13 * max(1.0, self.end)])
        merged = merged[keep]
        merged[-1] = self.end
        return TimeGrid(merged)

    def index_of(self, t: float) -> int:
        """Index of the node equal to ``t`` (within 1e-12); raises if absent."""
        i = int(np.argmin(np.abs(self.nodes - t)))
        if abs(self.nodes[i] - t) > 1e-12 * max(1.0, self.end):
            raise ValueError(f"time {t!r} is not a grid node")
        return i


class SGrid(TimeGrid):
    """Homotopy-parameter grid on ``[0, 1]``."""

    def __post_init__(self):
        super().__post_init__()
        if self.nodes[-1] != 1.0:
            raise ValueError(f"last s-node must be exactly 1, got {self.nodes[-1]!r}")

    @classmethod
    def uniform(cls, steps: int = DEFAULT_S_STEPS) -> "SGrid":
        return super().uniform(1.0, steps)


@dataclass(frozen=True, eq=False)
class SampledPath:
    """Values sampled at the nodes of a grid; axis 0 of ``values`` runs over nodes.

    Trailing axes are free: ``(n,)`` for scalar paths, ``(n, d)`` for vector
    paths, ``(n, batch, d)`` for a batch of paths integrated together.
    """

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape[0] != len(self.grid):
            raise ValueError(
                f"{values.shape[0]} samples for a grid of {len(self.grid)} nodes"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def initial(self) -> np.ndarray:
        return self.values[0]

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    def at(self, t) -> np.ndarray:
        """Piecewise-linear interpolation in time (vectorised over trailing axes)."""
        t = float(t)
        nodes = self.grid.nodes
        i = int(np.clip(np.searchsorted(nodes, t, side="right") - 1, 0, nodes.size - 2))
        w = (t - nodes[i]) / (nodes[i + 1] - nodes[i])
        return (1.0 - w) * self.values[i] + w * self.values[i + 1]


StageRhs = Callable[[int, float, float, np.ndarray], np.ndarray]


def rk4_sweep(stage_rhs: StageRhs, y0, nodes: np.ndarray, backward: bool = False) -> np.ndarray:
    """Classical RK4 over all steps of ``nodes``.

    ``stage_rhs(i, c, t, y)`` is evaluated on step ``i`` (the interval
    ``[t_i, t_{i+1}]``) at fractional location ``c`` in {0, 1/2, 1}. Passing the
    step index lets callers supply one-sided data (controls with jumps at
    nodes) without the integrator knowing about it.

    Returns an array of shape ``(len(nodes),) + y0.shape`` in increasing-t order.
    """
    y = np.array(y0, dtype=float)
    out = np.empty((nodes.size,) + y.shape)

    def stage(i, c, t, yy):
        k = np.asarray(stage_rhs(i, c, t, yy), dtype=float)
        if not np.all(np.isfinite(k)):
            node = i + (1 if c == 1.0 else 0)
            raise IntegrationError(
                f"non-finite right-hand side on step {i} near node {node} (t={t:.6g})",
                node=node,
                time=t,
            )
        return k

    # overflow is reported through the finiteness check, not as warnings
    with np.errstate(over="ignore", invalid="ignore"):
        _sweep(stage, y, nodes, out, backward)
    return out


def _sweep(stage, y, nodes, out, backward):
    n = nodes.size
    if not backward:
        out[0] = y
        for i in range(n - 1):
            t0, h = nodes[i], nodes[i + 1] - nodes[i]
            k1 = stage(i, 0.0, t0, y)
            k2 = stage(i, 0.5, t0 + 0.5 * h, y + 0.5 * h * k1)
            k3 = stage(i, 0.5, t0 + 0.5 * h, y + 0.5 * h * k2)
            k4 = stage(i, 1.0, nodes[i + 1], y + h * k3)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            out[i + 1] = y
    else:
        out[-1] = y
        for i in range(n - 2, -1, -1):
            t1, h = nodes[i + 1], nodes[i] - nodes[i + 1]
            k1 = stage(i, 1.0, t1, y)
            k2 = stage(i, 0.5, t1 + 0.5 * h, y + 0.5 * h * k1)
            k3 = stage(i, 0.5, t1 + 0.5 * h, y + 0.5 * h * k2)
            k4 = stage(i, 0.0, nodes[i], y + h * k3)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            out[i] = y


def integrate_ode(rhs: Callable, y0, grid: TimeGrid, direction: str = "forward") -> SampledPath:
    """Integrate ``y' = rhs(t, y)`` with classical RK4 on the nodes of ``grid``.

    Parameters
    ----------
    rhs : callable
        ``rhs(t, y)`` returning an array shaped like ``y``.
    y0 : array_like
        Initial value for ``direction="forward"``, terminal value for
        ``direction="backward"``.
    grid : TimeGrid
    direction : {"forward", "backward"}

    Returns
    -------
    SampledPath
        Samples in increasing-t order regardless of direction.
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")
    values = rk4_sweep(
        lambda i, c, t, y: rhs(t, y), y0, grid.nodes, backward=(direction == "backward")
    )
    return SampledPath(grid, values)


def quad_trapezoid(samples: SampledPath) -> float:
    """Composite trapezoid rule of scalar samples on a (possibly nonuniform) grid."""
    values = np.asarray(samples.values, dtype=float)
    if values.ndim != 1:
        raise ValueError("quad_trapezoid expects scalar samples")
    if not np.all(np.isfinite(values)):
        raise ValueError("non-finite samples")
    return float(np.trapezoid(values, samples.grid.nodes))


def quad_2d(values, tgrid: TimeGrid, sgrid: TimeGrid) -> float:
    """Tensor-product trapezoid rule of ``values[i, j] = f(t_i, s_j)``."""
    values = np.asarray(values, dtype=float)
    if values.shape != (len(tgrid), len(sgrid)):
        raise ValueError(
            f"values of shape {values.shape} do not match grids "
            f"({len(tgrid)}, {len(sgrid)})"
        )
    if not np.all(np.isfinite(values)):
        raise ValueError("non-finite samples")
    inner = np.trapezoid(values, tgrid.nodes, axis=0)
    return float(np.trapezoid(inner, sgrid.nodes))
