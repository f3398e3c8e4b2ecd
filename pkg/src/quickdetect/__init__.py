"""Bayesian quickest detection with imperfect inspections.

A drift appears in a Brownian observation at an unknown exponential time.
Inspections cost one unit each and miss an active drift with probability
``epsilon``; delay after the change costs ``beta`` per unit time. The
package computes the optimal inspection threshold and the value function,
and checks them against a grid solver and Monte Carlo simulation.
"""
from .boundary import F, Solution, SweepRow, constant_C, solve_boundary, sweep_epsilon
from .core_model import (
    IntervalDecomposition,
    ModelParams,
    decompose,
    g,
    g_inv,
    interval_index,
    make_params,
    params_from_gamma,
)
from .errors import (
    DomainError,
    OutOfLadderError,
    QuadratureError,
    QuickDetectError,
    SimulationQualityError,
    SolverError,
    TruncationError,
)
from .grid_oracle import GridValue, compare_to_closed_form, value_iteration
from .quadrature import QuadratureConfig
from .simulator import (
    McSummary,
    PathOutcome,
    SimConfig,
    detection_time_check,
    geometric_chisquare,
    monte_carlo,
    sample_theta,
    simulate_path,
)
from .specfun import Psi, Psi_between, chi, expected_hitting_time, h, psi, psi_prime
from .value import A_op, ValueDiagnostics, classical_reduction_check, diagnostics, value

__version__ = "0.1.0"
