"""Value function, its derivatives and the free-boundary diagnostics.

Below the boundary the value is ``Psi + C``. Above it the identity
``V(pi) = 1 + (1 - (1-eps) pi) V(g(pi))`` is unwound forward until the
argument drops below ``a*``; the composition is accumulated as an affine map
so no recursion depth is involved.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .boundary import solve_boundary
from .core_model import g
from .errors import DomainError
from .quadrature import DEFAULT_QUAD
from .specfun import Psi, Psi_between, psi, psi_prime

MAX_UNWIND = 10_000


def A_op(value_at, pi, epsilon):
    """``1 + (1 - (1-eps) pi) * value_at(g(pi))``."""
    return 1.0 + (1.0 - (1.0 - epsilon) * np.asarray(pi, dtype=float)) * value_at(g(pi, epsilon))


def _unwind(p, a, eps, max_steps):
    """Push every point below ``a`` with ``g``; return (landing points, p, q, steps, capped)
    such that ``V(pi) = p + q * V(landing)``."""
    x = p.copy()
    off = np.zeros_like(x)
    scale = np.ones_like(x)
    steps = np.zeros(x.shape, dtype=int)
    active = x >= a
    n = 0
    while np.any(active) and n < max_steps:
        xa = x[active]
        off[active] += scale[active]
        scale[active] *= 1.0 - (1.0 - eps) * xa
        x[active] = g(xa, eps)
        steps[active] += 1
        active = x >= a
        n += 1
    return x, off, scale, steps, active


def value(pi, sol, quad=None, *, return_flags=False):
    """Value function at ``pi`` in ``[0, 1]`` (scalar or array).

    With ``return_flags=True`` also returns a boolean array marking points whose
    unwinding hit the step cap; those are completed with ``V(1) = 1/(1-eps)``
    and are approximate.
    """
    quad = sol.quad if quad is None else quad
    scalar = np.ndim(pi) == 0
    p = np.atleast_1d(np.asarray(pi, dtype=float)).ravel()
    if np.any(~np.isfinite(p)) or np.any((p < 0.0) | (p > 1.0)):
        raise DomainError("pi must lie in [0, 1]")
    eps = sol.params.epsilon
    v1 = 1.0 / (1.0 - eps)
    out = np.empty_like(p)
    flags = np.zeros(p.shape, dtype=bool)
    at_one = p == 1.0
    out[at_one] = v1
    inner = ~at_one
    if np.any(inner):
        land, off, scale, _, capped = _unwind(p[inner], sol.a_star, eps, MAX_UNWIND)
        base = np.full(land.shape, v1)
        ok = ~capped
        if np.any(ok):
            base[ok] = np.atleast_1d(Psi(land[ok], sol.params, quad)) + sol.C
        out[inner] = off + scale * base
        flags[inner] = capped
    if scalar:
        return (float(out[0]), bool(flags[0])) if return_flags else float(out[0])
    return (out, flags) if return_flags else out


def value_and_derivatives(pi, sol, quad=None):
    """``(u, u', u'')`` at points of ``(0, 1)`` by chain rule through the unwinding.

    On ``[0, a*)``: ``u = Psi + C``, ``u' = psi``, ``u'' = psi'``. Above, with
    ``m = 1 - (1-eps) pi``::

        u'  = -(1-eps) u(g) + (eps/m) u'(g)
        u'' = eps**2 / m**3 * u''(g)

    At breakpoints the second derivative returned is the right limit.
    """
    quad = sol.quad if quad is None else quad
    p = np.atleast_1d(np.asarray(pi, dtype=float)).ravel()
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise DomainError("derivatives are evaluated on (0, 1)")
    eps, a = sol.params.epsilon, sol.a_star
    # forward pass: record the trajectory of each point
    path = [p.copy()]
    x = p.copy()
    while np.any(x >= a):
        if len(path) > MAX_UNWIND:
            raise DomainError("unwinding exceeded the step cap")
        x = np.where(x >= a, np.atleast_1d(g(x, eps)), x)
        path.append(x.copy())
    land = path[-1]
    u = np.atleast_1d(Psi(land, sol.params, quad)) + sol.C
    u1 = np.atleast_1d(psi(land, sol.params, quad))
    pos = land > 0
    u2 = np.zeros_like(land)
    if np.any(pos):
        u2[pos] = np.atleast_1d(psi_prime(land[pos], sol.params, quad))
    if np.any(~pos):
        u2[~pos] = -sol.params.beta / sol.params.lam
    # backward pass over the recorded steps
    for prev in reversed(path[:-1]):
        moved = prev >= a
        m = 1.0 - (1.0 - eps) * prev
        nu = np.where(moved, 1.0 + m * u, u)
        nu1 = np.where(moved, -(1.0 - eps) * u + eps / m * u1, u1)
        nu2 = np.where(moved, eps * eps / m ** 3 * u2, u2)
        u, u1, u2 = nu, nu1, nu2
    return u, u1, u2


def generator_residual(pi, sol, quad=None):
    """``H(pi) = lam(1-pi)u' + gamma pi^2 (1-pi)^2 u''(pi+) + beta pi``."""
    pr = sol.params
    p = np.atleast_1d(np.asarray(pi, dtype=float)).ravel()
    _, u1, u2 = value_and_derivatives(p, sol, quad)
    q = p * (1.0 - p)
    return pr.lam * (1.0 - p) * u1 + pr.gamma * q * q * u2 + pr.beta * p


def ode_residual_fd(pi, sol, quad=None, step=1e-6):
    """Residual of ``L u + beta pi = 0`` with central differences of ``Psi + C``.

    The differences of ``Psi`` are taken as local integrals of ``psi`` over
    ``[pi - step, pi]`` and ``[pi, pi + step]``, so no large values cancel.
    """
    quad = sol.quad if quad is None else quad
    pr = sol.params
    p = np.atleast_1d(np.asarray(pi, dtype=float)).ravel()
    lo, hi = p - step, p + step
    # realised widths differ from step by rounding, which matters at 1/step**2
    wl, wr = p - lo, hi - p
    left = np.atleast_1d(Psi_between(lo, p, pr, quad)) / wl
    right = np.atleast_1d(Psi_between(p, hi, pr, quad)) / wr
    d1 = (wl * right + wr * left) / (wl + wr)
    d2 = 2.0 * (right - left) / (wl + wr)
    q = p * (1.0 - p)
    return pr.lam * (1.0 - p) * d1 + pr.gamma * q * q * d2 + pr.beta * p


def _clear_of(points, breakpoints, margin):
    bps = np.asarray(breakpoints)
    idx = np.searchsorted(bps, points)
    lo = np.abs(points - bps[np.clip(idx - 1, 0, bps.size - 1)])
    hi = np.abs(points - bps[np.clip(idx, 0, bps.size - 1)])
    return np.minimum(lo, hi) > margin


@dataclass(frozen=True)
class ValueDiagnostics:
    """Gaps of the free-boundary conditions on a grid (sign conventions: gaps >= 0 are good)."""

    ode_residual_max: float
    variational_min: float
    obstacle_gap_min: float
    smooth_fit_gap: float
    value_matching_gap: float
    concavity_violations: int
    kappa: float
    grid_step: float
    details: dict = field(default_factory=dict, compare=False, repr=False)


def diagnostics(sol, quad=None, grid_step=1e-3, fd_step=1e-6):
    """Check every free-boundary condition on the grid ``grid_step, 2 grid_step, ...`` of ``(0, 1 - 1e-3)``.

    * ODE residual on ``(0, a*)`` with finite differences (step ``fd_step``);
    * ``H = L u + beta pi`` above ``a*``, off the breakpoints;
    * obstacle gap ``A u - u`` below ``a*``;
    * smooth fit and value matching at ``a*``;
    * bounds ``-kappa/(1-pi) < u'' < 0`` and ``kappa log(1-pi) < u' < 0``.

    Derivatives above ``a*`` come from :func:`value_and_derivatives`.
    Points within ``3 * fd_step`` of a breakpoint are skipped.
    """
    quad = sol.quad if quad is None else quad
    pr, a, eps = sol.params, sol.a_star, sol.params.epsilon
    grid = np.arange(1, int(round((1.0 - 1e-3) / grid_step))) * grid_step
    clear = _clear_of(grid, sol.decomp.breakpoints, 3 * fd_step)

    below = grid[(grid < a) & clear & (grid > 3 * fd_step)]
    ode = np.abs(ode_residual_fd(below, sol, quad, fd_step)) if below.size else np.zeros(0)

    pts = grid[clear]
    u, u1, u2 = value_and_derivatives(pts, sol, quad)
    q = pts * (1.0 - pts)
    H = pr.lam * (1.0 - pts) * u1 + pr.gamma * q * q * u2 + pr.beta * pts
    above = pts > a
    var_min = float(H[above].min()) if np.any(above) else float("inf")

    low = grid[grid < a]
    obstacle = np.atleast_1d(A_op(lambda x: value(x, sol, quad), low, eps)) - value(low, sol, quad)

    ga = g(a, eps)
    ps_g, ps_a = np.atleast_1d(psi(np.array([ga, a]), pr, quad))
    Psi_g, Psi_a = np.atleast_1d(Psi(np.array([ga, a]), pr, quad))
    m = 1.0 - (1.0 - eps) * a
    smooth_fit = abs(ps_a - (-(1.0 - eps) * (sol.C + Psi_g) + eps / m * ps_g))
    matching = abs(sol.C + Psi_a - 1.0 - m * (sol.C + Psi_g))

    kappa = pr.beta / (pr.lam * (1.0 - a))
    # with eps = 0 the value is affine above a*, so u'' vanishes there exactly
    flat = (eps == 0.0) & (pts > a) & (u2 == 0.0)
    bad2 = ~((-kappa / (1.0 - pts) < u2) & ((u2 < 0.0) | flat))
    bad1 = ~((kappa * np.log1p(-pts) < u1) & (u1 < 0.0))
    return ValueDiagnostics(
        ode_residual_max=float(ode.max()) if ode.size else 0.0,
        variational_min=var_min,
        obstacle_gap_min=float(obstacle.min()) if obstacle.size else float("inf"),
        smooth_fit_gap=float(smooth_fit),
        value_matching_gap=float(matching),
        concavity_violations=int(np.count_nonzero(bad1 | bad2)),
        kappa=float(kappa),
        grid_step=float(grid_step),
        details={"grid": pts, "u": u, "u1": u1, "u2": u2, "H": H},
    )


def breakpoint_jumps(sol, n=10, delta=1e-8, quad=None):
    """Largest jumps of ``V`` and ``V'`` across the first ``n`` breakpoints.

    One-sided values are taken at ``b -+ delta`` and extrapolated to ``b``
    with the first and second derivatives, so curvature near 1 does not
    masquerade as a jump.
    """
    bps = np.asarray(sol.decomp.breakpoints[:n])
    bps = bps[bps + delta < 1.0]
    left, right = bps - delta, bps + delta
    vl, dl, sl = value_and_derivatives(left, sol, quad)
    vr, dr, sr = value_and_derivatives(right, sol, quad)
    jump_v = np.abs((vl + delta * dl) - (vr - delta * dr))
    jump_d = np.abs((dl + delta * sl) - (dr - delta * sr))
    return float(np.max(jump_v)), float(np.max(jump_d))


def value_bound(sol):
    """``1/(1-eps) + |C| + sum_j (1 - (1-eps) a*)**j``."""
    eps = sol.params.epsilon
    return 1.0 / (1.0 - eps) + abs(sol.C) + 1.0 / ((1.0 - eps) * sol.a_star)


@dataclass(frozen=True)
class ReductionReport:
    """Outcome of the epsilon = 0 comparison with the classical detection problem."""

    a_star: float
    C: float
    C_plus_psi: float
    boundary_identity: float
    beta_tilde: float
    classical_boundary: float
    boundary_gap: float
    affine_gap: float
    scaling_gap: float


def classical_reduction_check(params, quad=DEFAULT_QUAD, sample=None, sol=None):
    """Compare the epsilon = 0 solution with the classical problem at cost ``beta / C``.

    The classical boundary ``A`` is re-solved from its own smooth-fit condition
    ``psi(A) = -C`` and the classical value

        V_C(pi) = 1 - A - (Psi(A) - Psi(pi)) / C   on [0, A),   1 - pi above,

    is built independently of the recursive solution.
    """
    if params.epsilon != 0.0:
        raise DomainError("the classical reduction needs epsilon = 0")
    sol = solve_boundary(params, quad) if sol is None else sol
    a, C = sol.a_star, sol.C
    psi_a = psi(a, params, quad)
    Psi_a = Psi(a, params, quad)
    A = brentq(lambda x: psi(x, params, quad) + C, 1e-9, 1.0 - 1e-9, xtol=1e-14, rtol=1e-14)
    pts = np.linspace(0.0, 0.99, 100) if sample is None else np.asarray(sample, dtype=float)
    v0 = value(pts, sol, quad)
    below = pts < A
    vc = 1.0 - pts
    if np.any(below):
        vc = vc.copy()
        vc[below] = 1.0 - A - (Psi(A, params, quad) - np.atleast_1d(Psi(pts[below], params, quad))) / C
    stop = pts >= a
    affine = np.abs(v0[stop] - 1.0 - C * (1.0 - pts[stop])) if np.any(stop) else np.zeros(1)
    return ReductionReport(
        a_star=a,
        C=C,
        C_plus_psi=float(C + psi_a),
        boundary_identity=float(1.0 - Psi_a + a * psi_a),
        beta_tilde=params.beta / C,
        classical_boundary=float(A),
        boundary_gap=float(abs(A - a)),
        affine_gap=float(affine.max()),
        scaling_gap=float(np.max(np.abs(v0 - 1.0 - C * vc))),
    )


__all__ = [
    "A_op",
    "value",
    "value_and_derivatives",
    "generator_residual",
    "ode_residual_fd",
    "ValueDiagnostics",
    "diagnostics",
    "breakpoint_jumps",
    "value_bound",
    "ReductionReport",
    "classical_reduction_check",
]
