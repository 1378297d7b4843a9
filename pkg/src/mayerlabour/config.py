"""Flat ``key = value`` run configuration and file-backed problems/controls.

Config files hold one dotted key per line; ``#`` starts a comment. Relative
paths are resolved against the directory of the file that names them.

Linear-affine problem files use the same syntax and describe

    F(t, q, u) = A(t) q + B(t) u
    C(t, q)    = (t / T) * (c + l . q + 1/2 q^T Q q)

with ``A``/``B`` either constant (rows separated by ``;``, entries by ``,``)
or tabulated (matrices separated by ``|`` with ``A.times`` / ``B.times``,
linearly interpolated in ``t``).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .benchmarks import BUILTIN_NAMES, builtin
from .numerics import DEFAULT_S_STEPS, DEFAULT_TIME_STEPS, TimeGrid
from .problem import ControlSet, ControlSignal, MayerProblem, validate_problem

INTERPOLATIONS = ("piecewise-linear", "piecewise-constant-left")


class ConfigError(ValueError):
    """Malformed, incomplete or inconsistent configuration or input file."""


# ---------------------------------------------------------------- flat parsing


def parse_flat(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_flat(path: Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from None
    return parse_flat(text, str(path))


def _floats(text: str, what: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.split(",") if x.strip() != ""], dtype=float)
    except ValueError:
        raise ConfigError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def _matrix(text: str, what: str) -> np.ndarray:
    rows = [_floats(r, what) for r in text.split(";") if r.strip()]
    if not rows or len({r.size for r in rows}) != 1:
        raise ConfigError(f"{what}: rows must be non-empty and of equal length")
    return np.vstack(rows)


def _int(text: str, what: str, minimum: int) -> int:
    try:
        value = int(text)
    except ValueError:
        raise ConfigError(f"{what}: expected an integer, got {text!r}") from None
    if value < minimum:
        raise ConfigError(f"{what} must be at least {minimum}")
    return value


def _positive(text: str, what: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"{what}: expected a number, got {text!r}") from None
    if not value > 0:
        raise ConfigError(f"{what} must be positive")
    return value


def _bool(text: str, what: str) -> bool:
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{what}: expected true/false, got {text!r}")


# ------------------------------------------------------- linear-affine problems


def _matrix_function(values: dict, key: str, shape: tuple, base: str):
    """Constant or time-tabulated matrix as a callable of ``t`` returning ``t.shape + shape``."""
    if key not in values:
        raise ConfigError(f"{base}: missing key {key!r}")
    blocks = [_matrix(b, f"{base}: {key}") for b in values[key].split("|")]
    for m in blocks:
        if m.shape != shape:
            raise ConfigError(f"{base}: {key} must have shape {shape}, got {m.shape}")
    times_key = f"{key}.times"
    if len(blocks) == 1 and times_key not in values:
        const = blocks[0]
        return lambda t: np.broadcast_to(const, np.shape(t) + shape)
    if times_key not in values:
        raise ConfigError(f"{base}: tabulated {key} needs {times_key}")
    times = _floats(values[times_key], f"{base}: {times_key}")
    if times.size != len(blocks) or times.size < 2 or np.any(np.diff(times) <= 0):
        raise ConfigError(f"{base}: {times_key} must be increasing with one entry per matrix")
    table = np.stack(blocks).reshape(len(blocks), -1)

    def at(t):
        t = np.asarray(t, dtype=float)
        flat = np.stack([np.interp(t, times, table[:, k]) for k in range(table.shape[1])], axis=-1)
        return flat.reshape(t.shape + shape)

    return at


def load_linear_affine(path) -> MayerProblem:
    """Build a :class:`MayerProblem` from a linear-affine problem file."""
    path = Path(path)
    values = read_flat(path)
    base = str(path)
    try:
        N = _int(values["state_dim"], "state_dim", 1)
        M = _int(values["control_dim"], "control_dim", 1)
        T = _positive(values["horizon"], "horizon")
        a0 = _floats(values["initial_state"], "initial_state")
    except KeyError as exc:
        raise ConfigError(f"{base}: missing key {exc.args[0]!r}") from None
    if a0.size != N:
        raise ConfigError(f"{base}: initial_state must have {N} entries")
    A = _matrix_function(values, "A", (N, N), base)
    B = _matrix_function(values, "B", (N, M), base)

    c0 = float(values.get("cost.constant", "0"))
    lin = _floats(values.get("cost.linear", ",".join(["0"] * N)), "cost.linear")
    Q = _matrix(values["cost.quadratic"], "cost.quadratic") if "cost.quadratic" in values else np.zeros((N, N))
    if lin.size != N or Q.shape != (N, N):
        raise ConfigError(f"{base}: cost.linear needs {N} entries and cost.quadratic shape ({N}, {N})")
    Q = 0.5 * (Q + Q.T)

    if "control.points" in values:
        K = ControlSet.from_points(_matrix(values["control.points"], "control.points"))
    elif "control.lower" in values and "control.upper" in values:
        K = ControlSet.from_box(_floats(values["control.lower"], "control.lower"),
                                _floats(values["control.upper"], "control.upper"))
    else:
        raise ConfigError(f"{base}: give control.points or control.lower and control.upper")
    if K.dim != M:
        raise ConfigError(f"{base}: control set has dimension {K.dim}, expected {M}")

    def lead(t, q, u):
        return np.broadcast_shapes(np.shape(t), np.shape(q)[:-1], np.shape(u)[:-1])

    def f(t, q, u):
        q, u = np.asarray(q, dtype=float), np.asarray(u, dtype=float)
        return (A(t) @ q[..., None])[..., 0] + (B(t) @ u[..., None])[..., 0]

    def f_q(t, q, u):
        return np.broadcast_to(A(t), lead(t, q, u) + (N, N)).copy()

    def f_u(t, q, u):
        return np.broadcast_to(B(t), lead(t, q, u) + (N, M)).copy()

    def g(q):
        return c0 + q @ lin + 0.5 * np.einsum("...i,ij,...j->...", q, Q, q)

    def cost(t, q):
        return np.asarray(t) / T * g(np.asarray(q, dtype=float))

    def cost_t(t, q):
        return g(np.asarray(q, dtype=float)) / T + 0.0 * np.asarray(t)

    def cost_q(t, q):
        q = np.asarray(q, dtype=float)
        return (np.asarray(t, dtype=float) / T)[..., None] * (lin + q @ Q)

    try:
        return MayerProblem(
            state_dim=N, control_dim=M, horizon=T, dynamics=f, terminal_cost=cost, control_set=K,
            initial_state=a0, dynamics_dq=f_q, dynamics_du=f_u, terminal_cost_dq=cost_q,
            terminal_cost_dt=cost_t, name=values.get("name", path.stem),
        )
    except ValueError as exc:
        raise ConfigError(f"{base}: {exc}") from None


# ------------------------------------------------------------- control files


def read_control_file(path, dim: int):
    """Read ``t, u_1, ..., u_M`` rows from a CSV file; a non-numeric first row is a header."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    except OSError as exc:
        raise ConfigError(f"cannot read control file {path}: {exc.strerror or exc}") from None
    if rows:
        try:
            float(rows[0][0])
        except ValueError:
            rows = rows[1:]
    try:
        data = np.array([[float(x) for x in r] for r in rows], dtype=float)
    except ValueError:
        raise ConfigError(f"{path}: control samples must be numeric") from None
    if data.ndim != 2 or data.shape[0] < 2 or data.shape[1] != dim + 1:
        raise ConfigError(f"{path}: expected at least two rows of {dim + 1} columns (t, u)")
    return data[:, 0], data[:, 1:]


# ---------------------------------------------------------------- run config


@dataclass(frozen=True)
class ControlSource:
    kind: str = "optimal"           # optimal | constant | file
    value: Optional[tuple] = None
    file: Optional[Path] = None
    interpolation: str = "piecewise-linear"


@dataclass(frozen=True)
class RunConfig:
    problem_name: Optional[str] = None
    problem_file: Optional[Path] = None
    control: ControlSource = field(default_factory=ControlSource)
    target: Optional[ControlSource] = None
    time_steps: int = DEFAULT_TIME_STEPS
    s_steps: int = DEFAULT_S_STEPS
    homotopy_mode: str = "p-optimal"
    homotopy_b: Optional[tuple] = None
    tau_count: int = 50
    omega_density: int = 9
    pmp_tolerance: float = 1e-6
    needle_check: bool = False
    needle_epsilons: Optional[tuple] = None
    needle_smoothing: float = 0.05
    lambda_steps: int = 20
    output_path: Optional[Path] = None


KNOWN_KEYS = {
    "problem.name", "problem.file",
    "grids.time_steps", "grids.s_steps",
    "homotopy.mode", "homotopy.b",
    "pmp.tau_count", "pmp.omega_density", "pmp.tolerance", "pmp.needle_check",
    "needle.epsilons", "needle.smoothing",
    "labour.lambda_steps",
    "output.path", "output.format",
} | {f"{p}.{k}" for p in ("control", "target") for k in ("kind", "value", "file", "interpolation")}


def _control_source(values: dict, prefix: str, root: Path) -> Optional[ControlSource]:
    keys = {k[len(prefix) + 1:]: v for k, v in values.items() if k.startswith(prefix + ".")}
    if not keys:
        return None
    kind = keys.get("kind")
    if kind is None:
        kind = "file" if "file" in keys else "constant" if "value" in keys else "optimal"
    if kind not in ("optimal", "constant", "file"):
        raise ConfigError(f"{prefix}.kind must be optimal, constant or file")
    interpolation = keys.get("interpolation", "piecewise-linear")
    if interpolation not in INTERPOLATIONS:
        raise ConfigError(f"{prefix}.interpolation must be one of {', '.join(INTERPOLATIONS)}")
    value = file = None
    if kind == "constant":
        if "value" not in keys:
            raise ConfigError(f"{prefix}.value is required for a constant control")
        value = tuple(_floats(keys["value"], f"{prefix}.value"))
    if kind == "file":
        if "file" not in keys:
            raise ConfigError(f"{prefix}.file is required for a file control")
        file = (root / keys["file"]).resolve()
        if not file.is_file():
            raise ConfigError(f"control file not found: {file}")
    return ControlSource(kind, value, file, interpolation)


def parse_config(values: dict, root: Path = Path(".")) -> RunConfig:
    """Validate a flat key/value mapping into a :class:`RunConfig`."""
    unknown = sorted(set(values) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    name, pfile = values.get("problem.name"), values.get("problem.file")
    if (name is None) == (pfile is None):
        raise ConfigError("give exactly one of problem.name and problem.file")
    if name is not None and name not in BUILTIN_NAMES:
        raise ConfigError(f"unknown builtin problem {name!r}; choose from {', '.join(BUILTIN_NAMES)}")
    problem_file = None
    if pfile is not None:
        problem_file = (root / pfile).resolve()
        if not problem_file.is_file():
            raise ConfigError(f"problem file not found: {problem_file}")
    if values.get("output.format", "csv") != "csv":
        raise ConfigError("output.format must be csv")
    mode = values.get("homotopy.mode", "p-optimal")
    if mode not in ("p-optimal", "fixed-b"):
        raise ConfigError("homotopy.mode must be p-optimal or fixed-b")
    eps = None
    if "needle.epsilons" in values:
        eps = tuple(_floats(values["needle.epsilons"], "needle.epsilons"))
        if not eps or min(eps) <= 0:
            raise ConfigError("needle.epsilons must be positive")
    smoothing = _positive(values.get("needle.smoothing", "0.05"), "needle.smoothing")
    if smoothing >= 1:
        raise ConfigError("needle.smoothing must be below 1")
    return RunConfig(
        problem_name=name,
        problem_file=problem_file,
        control=_control_source(values, "control", root) or ControlSource(),
        target=_control_source(values, "target", root),
        time_steps=_int(values.get("grids.time_steps", str(DEFAULT_TIME_STEPS)), "grids.time_steps", 2),
        s_steps=_int(values.get("grids.s_steps", str(DEFAULT_S_STEPS)), "grids.s_steps", 2),
        homotopy_mode=mode,
        homotopy_b=tuple(_floats(values["homotopy.b"], "homotopy.b")) if "homotopy.b" in values else None,
        tau_count=_int(values.get("pmp.tau_count", "50"), "pmp.tau_count", 2),
        omega_density=_int(values.get("pmp.omega_density", "9"), "pmp.omega_density", 2),
        pmp_tolerance=_positive(values.get("pmp.tolerance", "1e-6"), "pmp.tolerance"),
        needle_check=_bool(values.get("pmp.needle_check", "false"), "pmp.needle_check"),
        needle_epsilons=eps,
        needle_smoothing=smoothing,
        lambda_steps=_int(values.get("labour.lambda_steps", "20"), "labour.lambda_steps", 1),
        output_path=(root / values["output.path"]).resolve() if "output.path" in values else None,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(read_flat(path), path.resolve().parent)


# ------------------------------------------------------------- materialising


@dataclass(frozen=True, eq=False)
class Session:
    """A loaded problem plus the controls named by a config, all on one grid."""

    problem: MayerProblem
    control: ControlSignal
    target: Optional[ControlSignal]
    grid: TimeGrid


def _signal(source: ControlSource, problem: MayerProblem, grid: TimeGrid, bench, tables) -> ControlSignal:
    if source.kind == "optimal":
        if bench is None:
            raise ConfigError("an optimal control is only known for builtin problems")
        return bench.optimal_on(grid)
    if source.kind == "constant":
        if len(source.value) != problem.control_dim:
            raise ConfigError(f"control value needs {problem.control_dim} entries")
        return ControlSignal.constant(grid, source.value, source.interpolation)
    times, samples = tables[source.file]
    return ControlSignal(TimeGrid(times), samples, source.interpolation).resample(grid)


def open_session(config: RunConfig) -> Session:
    """Load the problem and controls; file controls have their times merged into the grid."""
    if config.problem_name is not None:
        bench = builtin(config.problem_name, config.time_steps)
        problem = bench.problem
    else:
        bench = None
        problem = load_linear_affine(config.problem_file)
        if validate_problem(problem):
            raise ConfigError("; ".join(str(v) for v in validate_problem(problem)))
    sources = [s for s in (config.control, config.target) if s is not None]
    tables = {}
    grid = problem.time_grid(config.time_steps)
    for s in sources:
        if s.kind == "file" and s.file not in tables:
            times, samples = read_control_file(s.file, problem.control_dim)
            if abs(times[0]) > 1e-12 or abs(times[-1] - problem.horizon) > 1e-12 * max(1.0, problem.horizon):
                raise ConfigError(f"{s.file}: sample times must run from 0 to the horizon")
            if np.any(np.diff(times) <= 0):
                raise ConfigError(f"{s.file}: sample times must be strictly increasing")
            tables[s.file] = (times, samples)
            grid = grid.with_nodes(times)
    control = _signal(config.control, problem, grid, bench, tables)
    target = _signal(config.target, problem, grid, bench, tables) if config.target else None
    return Session(problem, control, target, grid)
