"""Labour integrals, Stokes-identity checks and needle-variation certificates for Mayer problems."""

from .benchmarks import BUILTIN_NAMES, BenchmarkProblem, brute_force_oracle, builtin
from .labour import (
    ControlHomotopy,
    HomotopySurface,
    LabourReport,
    endpoint_labour,
    endpoint_labour_direct,
    labour_derivative_at_zero,
    labour_function,
    lift_homotopy,
    linear_homotopy,
    stationarity_check,
    stokes_report,
    two_dim_labour,
)
from .lift import (
    CostForm,
    LiftedCurve,
    backward_costate,
    cost_line_integral,
    forward_state,
    lift_p_optimal,
    lift_with_initial_costate,
    terminal_cost_value,
)
from .needles import (
    NeedleSpec,
    PmpCertificate,
    make_needle,
    needle_derivative,
    needle_labour_W,
    pmp_certificate,
    smooth_needle,
)
from .numerics import IntegrationError, SampledPath, SGrid, TimeGrid, integrate_ode, quad_2d, quad_trapezoid
from .problem import (
    Box,
    ControlPair,
    ControlSet,
    ControlSignal,
    MayerProblem,
    Violation,
    eval_hamiltonian,
    eval_hamiltonian_du,
    validate_problem,
)

__version__ = "0.1.0"
