"""Command-line front end: ``mayerlabour COMMAND --config PATH [--out PATH]``.

Every command writes one CSV table (to ``--out`` or stdout) and a one-row
summary CSV (echoed to stdout and, with ``--out``, saved next to the table as
``<out>.summary.csv``). Floats are printed with 17 significant digits so
repeated runs are byte-identical.

Exit status: 0 on success (a refuted certificate is a success), 1 on usage,
configuration or I/O errors, 2 on numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, Session, load_config, open_session
from .labour import (
    labour_derivative_at_zero,
    labour_function,
    lift_homotopy,
    linear_homotopy,
    endpoint_labour_direct,
    stationarity_check,
    stokes_report,
)
from .lift import cost_line_integral, lift_p_optimal, terminal_cost_value
from .needles import needle_derivative, pmp_certificate
from .numerics import IntegrationError, SGrid

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2


class NumericalFailure(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"numerical failure during {stage}: {cause}")
        self.stage = stage


class _Stage:
    """Context manager that re-raises integration trouble tagged with a stage name."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, kind, exc, tb):
        if isinstance(exc, (IntegrationError, FloatingPointError, np.linalg.LinAlgError)):
            raise NumericalFailure(self.name, exc) from exc
        return False


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x) + 0.0, ".17g")  # + 0.0 folds -0 into 0


class Report:
    """A table plus a one-row summary, rendered as CSV."""

    def __init__(self, header, rows, summary: dict):
        self.header = list(header)
        self.rows = [list(r) for r in rows]
        self.summary = summary

    @staticmethod
    def _csv(header, rows) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def table_csv(self) -> str:
        return self._csv(self.header, self.rows)

    def summary_csv(self) -> str:
        return self._csv(list(self.summary), [list(self.summary.values())])


def _cols(prefix: str, n: int):
    return [f"{prefix}_{i + 1}" for i in range(n)]


def _need_target(session: Session, command: str):
    if session.target is None:
        raise ConfigError(f"{command} needs a target control (target.kind / target.value / target.file)")
    return session.target


# -------------------------------------------------------------------- commands


def cmd_simulate(config: RunConfig, session: Session) -> Report:
    pr, u = session.problem, session.control
    with _Stage("state/costate lift"):
        curve = lift_p_optimal(pr, u)
    with _Stage("cost line integral"):
        line = cost_line_integral(pr, curve)
    terminal = terminal_cost_value(pr, curve.q)
    t = curve.grid.nodes
    rows = np.column_stack([t, curve.q.values, curve.p.values, u.samples])
    header = ["t"] + _cols("q", pr.state_dim) + _cols("p", pr.state_dim) + _cols("u", pr.control_dim)
    summary = {
        "command": "simulate", "problem": pr.name, "terminal_cost": terminal,
        "line_integral_cost": line, "discrepancy": abs(line - terminal),
        "terminal_residual": curve.terminal_residual(pr),
    }
    return Report(header, rows, summary)


def _surface(config: RunConfig, session: Session, command: str):
    pr = session.problem
    target = _need_target(session, command)
    homotopy = linear_homotopy(session.control, target, SGrid.uniform(config.s_steps))
    b = None
    if config.homotopy_mode == "fixed-b" and config.homotopy_b is not None:
        b = np.asarray(config.homotopy_b, dtype=float)
        if b.shape != (pr.state_dim,):
            raise ConfigError(f"homotopy.b needs {pr.state_dim} entries")
    with _Stage("homotopy lift"):
        return lift_homotopy(pr, homotopy, config.homotopy_mode, b)


def cmd_check_stokes(config: RunConfig, session: Session) -> Report:
    pr = session.problem
    surface = _surface(config, session, "check-stokes")
    with _Stage("labour quadrature"):
        report = stokes_report(pr, surface)
        direct = endpoint_labour_direct(pr, surface)
        s = surface.homotopy.sgrid.nodes
        costs = [cost_line_integral(pr, surface.lift(j)) for j in range(len(s))]
    summary = {"command": "check-stokes", "problem": pr.name, "mode": surface.mode}
    summary.update(report.as_record())
    summary["endpoint_labour_direct"] = direct
    return Report(["s", "cost"], zip(s, costs), summary)


def cmd_check_pmp(config: RunConfig, session: Session) -> Report:
    pr, u = session.problem, session.control
    with _Stage("certificate scan"):
        cert = pmp_certificate(pr, u, config.tau_count, tolerance=config.pmp_tolerance,
                               omega_density=config.omega_density)
    M = pr.control_dim
    header = ["tau"] + _cols("omega", M) + ["gap"]
    rows = []
    for tau, om, gap in cert.rows():
        row = [tau, *om, gap]
        if config.needle_check:
            row += _needle_columns(config, session, tau, om)
        rows.append(row)
    if config.needle_check:
        header += ["needle_derivative", "needle_consistent"]
    witness_tau, witness_omega = cert.witness if cert.witness else ("", ())
    summary = {
        "command": "check-pmp", "problem": pr.name, "verdict": cert.verdict,
        "min_gap": cert.min_gap, "tolerance": cert.tolerance,
        "witness_tau": witness_tau,
        "witness_omega": ";".join(_fmt(w) for w in witness_omega),
        "tau_count": len(cert.tau_grid), "omega_count": len(cert.omega_samples),
    }
    return Report(header, rows, summary)


def _needle_columns(config: RunConfig, session: Session, tau: float, omega) -> list:
    T = session.problem.horizon
    ladder = config.needle_epsilons
    widest = max(ladder) if ladder else 0.08 * T
    if tau - widest < 0:
        return ["nan", ""]
    with _Stage(f"needle labour at tau={tau:.6g}"):
        d = needle_derivative(session.problem, session.control, tau, omega, ladder,
                              config.needle_smoothing, SGrid.uniform(config.s_steps))
    return [d.estimate, d.consistent]


def cmd_labour_scan(config: RunConfig, session: Session) -> Report:
    pr = session.problem
    target = _need_target(session, "labour-scan")
    homotopy = linear_homotopy(session.control, target, SGrid.uniform(config.s_steps))
    lambdas = np.linspace(0.0, 1.0, config.lambda_steps + 1)
    with _Stage("labour function"):
        W = labour_function(pr, homotopy, lambdas)
        slope = labour_derivative_at_zero(pr, homotopy)
        sup = stationarity_check(pr, session.control)
    summary = {
        "command": "labour-scan", "problem": pr.name, "derivative_at_zero": slope,
        "stationarity_sup": sup, "min_labour": float(W.values.min()),
    }
    return Report(["lambda", "labour"], zip(W.lambdas, W.values), summary)


COMMANDS = {
    "simulate": cmd_simulate,
    "check-stokes": cmd_check_stokes,
    "check-pmp": cmd_check_pmp,
    "labour-scan": cmd_labour_scan,
}


# ------------------------------------------------------------------------ main


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mayerlabour", description="Verify cost identities and optimality of Mayer problems.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, type=Path, help="flat key=value configuration file")
    parser.add_argument("--out", type=Path, help="path of the CSV table (default: stdout)")
    parser.add_argument("--format", choices=["csv"], default="csv")
    return parser


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc.strerror or exc}") from None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        out = args.out or config.output_path
        session = open_session(config)
        report = COMMANDS[args.command](config, session)
        if out is not None:
            _write(out, report.table_csv())
            _write(out.with_name(out.name + ".summary.csv"), report.summary_csv())
        else:
            sys.stdout.write(report.table_csv() + "\n")
        sys.stdout.write(report.summary_csv())
    except NumericalFailure as exc:
        print(f"mayerlabour: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError) as exc:
        print(f"mayerlabour: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    main_entry()
