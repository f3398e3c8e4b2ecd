"""Free-boundary equation, the constant C and epsilon sweeps."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core_model import DEFAULT_ETA, IntervalDecomposition, ModelParams, decompose, g
from .errors import QuickDetectError, SolverError
from .quadrature import DEFAULT_QUAD
from .specfun import Psi, Psi_between, psi

log = logging.getLogger(__name__)

LEFT_END = 1e-6
RIGHT_LIMIT = 1.0 - 1e-6
DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class Solution:
    """Optimal inspection threshold and the constant of the continuation value."""

    a_star: float
    C: float
    decomp: IntervalDecomposition
    params: ModelParams
    residual: float
    tol: float
    quad: object = DEFAULT_QUAD

    @property
    def epsilon(self):
        return self.params.epsilon

    @property
    def g_a_star(self):
        return g(self.a_star, self.params.epsilon)

    @property
    def expected_n_tests(self):
        """Mean number of inspections when starting at or below the boundary."""
        return 1.0 / ((1.0 - self.params.epsilon) * self.a_star)

    @property
    def kappa(self):
        return self.params.beta / (self.params.lam * (1.0 - self.a_star))


def F(a, params, quad=DEFAULT_QUAD):
    """``1 + Psi(g(a)) - g(a) psi(g(a)) - Psi(a) + a psi(a)``.

    The two ``Psi`` terms are taken as one integral over ``[g(a), a]``.
    """
    if not 0.0 < a < 1.0:
        raise QuickDetectError(f"F is defined on (0, 1), got a = {a}")
    eps = params.epsilon
    ga = g(a, eps)
    ps = np.atleast_1d(psi(np.array([ga, a]), params, quad))
    return 1.0 - Psi_between(ga, a, params, quad) - ga * ps[0] + a * ps[1]


def constant_C(a, params, quad=DEFAULT_QUAD):
    """Constant of the continuation value ``Psi + C`` given the boundary ``a``."""
    eps = params.epsilon
    ga = g(a, eps)
    ps_g, ps_a = np.atleast_1d(psi(np.array([ga, a]), params, quad))
    Psi_a = Psi(a, params, quad)
    if eps == 0.0:
        return 1.0 - (1.0 - a) * ps_a - Psi_a
    return 1.0 + eps / (1.0 - eps) * ps_g - (1.0 - (1.0 - eps) * a) / (1.0 - eps) * ps_a - Psi_a


def _bracket(params, quad):
    f_left = F(LEFT_END, params, quad)
    if not f_left > 0:
        raise SolverError("F is not positive at the left end", {"a": LEFT_END, "F": f_left})
    lo, f_lo = LEFT_END, f_left
    scanned = [(LEFT_END, f_left)]
    candidates = [0.5] + [1.0 - 0.1 * 2.0 ** -k for k in range(64)]
    for b in candidates:
        if b > RIGHT_LIMIT:
            b = RIGHT_LIMIT
        if b <= lo:
            continue
        fb = F(b, params, quad)
        scanned.append((b, fb))
        if fb < 0:
            return lo, b, f_lo, fb
        lo, f_lo = b, fb
        if b == RIGHT_LIMIT:
            break
    raise SolverError(
        f"F does not change sign before {RIGHT_LIMIT}",
        {"scanned": scanned, "params": params.as_dict()},
    )


def solve_boundary(params, quad=DEFAULT_QUAD, tol=DEFAULT_TOL, eta=DEFAULT_ETA):
    """Locate the unique root ``a*`` of ``F`` by bracketing and bisection.

    Returns a :class:`Solution` whose ``residual`` is ``|F(a*)|`` and whose
    ``tol`` is the final bracket width.
    """
    if tol <= 0:
        raise SolverError("tol must be > 0")
    lo, hi, f_lo, f_hi = _bracket(params, quad)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        f_mid = F(mid, params, quad)
        if f_mid == 0.0:
            lo = hi = mid
            break
        if f_mid > 0:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    # linear interpolation inside the final bracket
    a = lo if f_lo == f_hi else lo + (hi - lo) * f_lo / (f_lo - f_hi)
    a = min(max(a, lo), hi)
    residual = abs(F(a, params, quad))
    C = constant_C(a, params, quad)
    log.debug("solved a*=%.12g C=%.12g residual=%.3e", a, C, residual)
    return Solution(
        a_star=a,
        C=C,
        decomp=decompose(a, params.epsilon, eta=min(eta, 0.5 * (1.0 - a))),
        params=params,
        residual=residual,
        tol=tol,
        quad=quad,
    )


@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    a_star: float = float("nan")
    g_a_star: float = float("nan")
    gap: float = float("nan")
    C: float = float("nan")
    solution: Solution | None = None
    error: str = ""


def sweep_epsilon(params_base, eps_grid, quad=DEFAULT_QUAD, tol=DEFAULT_TOL):
    """Solve the boundary for each epsilon in ``eps_grid``.

    Failures are recorded in the row's ``error`` field and the sweep carries on.
    """
    eps_list = [float(e) for e in eps_grid]
    if any(e < 0.0 or e > 0.99 for e in eps_list):
        raise QuickDetectError("eps_grid must lie in [0, 0.99]")
    if eps_list != sorted(eps_list):
        raise QuickDetectError("eps_grid must be sorted")
    rows = []
    for eps in eps_list:
        try:
            sol = solve_boundary(params_base.with_epsilon(eps), quad, tol)
        except QuickDetectError as exc:
            rows.append(SweepRow(epsilon=eps, error=f"{type(exc).__name__}: {exc}"))
            continue
        ga = sol.g_a_star
        rows.append(SweepRow(eps, sol.a_star, ga, sol.a_star - ga, sol.C, sol))
    return rows
