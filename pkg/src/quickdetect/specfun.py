"""Scale and cost functions of the posterior diffusion.

All kernel integrals have the form

    I_p(pi) = int_0^pi exp(h(x) - h(pi)) / (x**p (1 - x)**2) dx,

with ``h`` increasing, so the exponent is never positive and nothing
overflows. The integrand has a boundary layer at ``x = pi`` whose width is
about ``pi**2 / rho`` for small ``pi`` and ``1 - pi`` near 1; the initial
panels are packed geometrically towards the upper limit to resolve it before
adaptive refinement takes over.
"""
from __future__ import annotations

import numpy as np

from .errors import DomainError
from .quadrature import DEFAULT_QUAD, QuadratureConfig, integrate_batch

_CHUNK = 256

__all__ = [
    "QuadratureConfig",
    "h",
    "psi",
    "psi_prime",
    "Psi",
    "Psi_between",
    "chi",
    "expected_hitting_time",
]


def _scalar_or_array(values, scalar):
    return float(values[0]) if scalar else values


def h(pi, params):
    """``rho * (log(pi / (1 - pi)) - 1 / pi)`` on (0, 1)."""
    p = np.asarray(pi, dtype=float)
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise DomainError("h is defined on the open interval (0, 1)")
    out = params.rho * (np.log(p) - np.log1p(-p) - 1.0 / p)
    return float(out) if out.ndim == 0 else out


def _log_kernel(s, pi, rho, power):
    """Log integrand in ``s = (pi - x) / pi``, Jacobian ``pi`` included.

    ``1 - x = (1 - pi) + pi s`` and ``x / pi = 1 - s`` are formed without
    cancellation, which matters when ``pi`` is within a few ulps of 1.
    """
    one_m_pi = 1.0 - pi
    log1m_s = np.log1p(-s)
    log1m_x = np.log(one_m_pi + pi * s)
    # h(x) - h(pi), with no large terms cancelling
    dh = rho * (log1m_s + np.log(one_m_pi) - log1m_x - s / ((1.0 - s) * pi))
    return dh - power * (np.log(pi) + log1m_s) - 2.0 * log1m_x + np.log(pi)


def _initial_panels(pis, rho):
    """Panels ``[2**-(j+1), 2**-j]`` in ``s`` down to the boundary-layer width."""
    with np.errstate(over="ignore"):
        layer = np.minimum.reduce([pis / rho, (1.0 - pis) / pis, np.ones_like(pis)])
    layer = np.maximum(layer, 2.0**-56)
    n_split = np.clip(np.ceil(np.log2(1.0 / layer)).astype(int) + 4, 2, 60)
    owner = np.repeat(np.arange(pis.size), n_split + 1)
    starts = np.cumsum(n_split + 1) - (n_split + 1)
    j = np.arange(owner.size) - np.repeat(starts, n_split + 1)
    jmax = n_split[owner]
    hi = np.ldexp(1.0, -j)
    lo = np.where(j < jmax, np.ldexp(1.0, -(j + 1)), 0.0)
    return lo, hi, owner


def _kernel_integral(pi, rho, power, quad):
    p = np.atleast_1d(np.asarray(pi, dtype=float))
    out = np.zeros(p.shape)
    live = np.flatnonzero(p > 0.0)
    # bounded batches keep the node arrays small
    for start in range(0, live.size, _CHUNK):
        idx = live[start:start + _CHUNK]
        pis = p[idx]
        lo, hi, owner = _initial_panels(pis, rho)

        def f(s, own, pis=pis):
            with np.errstate(divide="ignore", over="ignore"):
                return np.exp(_log_kernel(s, pis[own], rho, power))

        vals, _ = integrate_batch(f, lo, hi, owner, pis.size, quad)
        out[idx] = vals
    return out


def _check_unit(p, *, open_left=False):
    if np.any(~np.isfinite(p)) or np.any(p < 0.0) or np.any(p >= 1.0) or (open_left and np.any(p <= 0.0)):
        lo = "(0" if open_left else "[0"
        raise DomainError(f"argument must lie in {lo}, 1)")


def psi(pi, params, quad=DEFAULT_QUAD):
    """Derivative of the continuation value below the boundary.

    ``psi(pi) = -(beta/gamma) * I_1(pi)``; ``psi(0) = 0`` and ``psi < 0`` on (0, 1).
    Scalars in, scalar out; arrays are evaluated in a single batch.
    """
    scalar = np.ndim(pi) == 0
    p = np.atleast_1d(np.asarray(pi, dtype=float))
    _check_unit(p)
    vals = -(params.beta / params.gamma) * _kernel_integral(p.ravel(), params.rho, 1, quad)
    return _scalar_or_array(vals.reshape(p.shape), scalar)


def psi_prime(pi, params, quad=DEFAULT_QUAD):
    """``psi'`` from the ODE identity ``lam(1-pi)psi + gamma pi^2 (1-pi)^2 psi' + beta pi = 0``."""
    scalar = np.ndim(pi) == 0
    p = np.atleast_1d(np.asarray(pi, dtype=float))
    _check_unit(p, open_left=True)
    ps = np.atleast_1d(psi(p, params, quad))
    q = p * (1.0 - p)
    vals = -(params.beta * p + params.lam * (1.0 - p) * ps) / (params.gamma * q * q)
    return _scalar_or_array(vals, scalar)


def chi(pi, params, quad=DEFAULT_QUAD):
    """Derivative of the expected hitting time: ``-(1/gamma) * I_2(pi)``, negative on [0, 1).

    At 0 the limit ``-1/lambda`` is returned (``I_2(0+) = 1/rho``).
    """
    scalar = np.ndim(pi) == 0
    p = np.atleast_1d(np.asarray(pi, dtype=float))
    _check_unit(p)
    vals = -(1.0 / params.gamma) * _kernel_integral(p.ravel(), params.rho, 2, quad)
    vals = np.where(p.ravel() == 0.0, -1.0 / params.lam, vals)
    return _scalar_or_array(vals.reshape(p.shape), scalar)


def _outer_integrals(func, lo, hi, quad, splits=2):
    """``int_lo^hi func`` for arrays of intervals, ``func`` vectorised over nodes."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = lo.size
    frac = np.linspace(0.0, 1.0, splits + 1)
    edges = lo[:, None] + (hi - lo)[:, None] * frac[None, :]
    plo, phi = edges[:, :-1].ravel(), edges[:, 1:].ravel()
    owner = np.repeat(np.arange(n), splits)

    def f(x, _own):
        return func(x.ravel()).reshape(x.shape)

    vals, _ = integrate_batch(f, plo, phi, owner, n, quad)
    return vals


def Psi_between(lo, hi, params, quad=DEFAULT_QUAD):
    """``int_lo^hi psi(x) dx`` for ``0 <= lo <= hi < 1`` (scalars or matching arrays)."""
    scalar = np.ndim(lo) == 0 and np.ndim(hi) == 0
    lo_a, hi_a = np.broadcast_arrays(np.atleast_1d(np.asarray(lo, float)), np.atleast_1d(np.asarray(hi, float)))
    _check_unit(lo_a)
    _check_unit(hi_a)
    if np.any(hi_a < lo_a):
        raise DomainError("Psi_between requires lo <= hi")
    vals = _outer_integrals(lambda x: np.atleast_1d(psi(x, params, quad)), lo_a.ravel(), hi_a.ravel(), quad)
    return _scalar_or_array(vals, scalar)


def _cumulative_from_zero(func, p, quad):
    order = np.argsort(p, kind="stable")
    sp = p[order]
    starts = np.concatenate([[0.0], sp[:-1]])
    pieces = _outer_integrals(func, starts, sp, quad)
    out = np.empty_like(p)
    out[order] = np.cumsum(pieces)
    return out


def Psi(pi, params, quad=DEFAULT_QUAD):
    """``int_0^pi psi(x) dx``: zero at 0, strictly decreasing.

    For an array the points are sorted and integrated piecewise, so one call
    over a whole grid costs about as much as a call at its largest point.
    """
    scalar = np.ndim(pi) == 0
    p = np.atleast_1d(np.asarray(pi, dtype=float)).ravel()
    _check_unit(p)
    vals = _cumulative_from_zero(lambda x: np.atleast_1d(psi(x, params, quad)), p, quad)
    return _scalar_or_array(vals, scalar)


def expected_hitting_time(pi, a, params, quad=DEFAULT_QUAD):
    """Mean time for the no-jump posterior started at ``pi`` to reach ``a``.

    Returns ``-int_pi^a chi(x) dx``, which is zero at ``pi = a``. ``pi`` may be
    an array; ``a`` is a scalar.
    """
    scalar = np.ndim(pi) == 0
    p = np.atleast_1d(np.asarray(pi, dtype=float)).ravel()
    if not 0.0 <= a < 1.0:
        raise DomainError(f"target level must lie in [0, 1), got {a}")
    _check_unit(p)
    if np.any(p > a):
        raise DomainError("expected_hitting_time requires pi <= a")
    vals = -_outer_integrals(lambda x: np.atleast_1d(chi(x, params, quad)), p, np.full_like(p, a), quad)
    return _scalar_or_array(vals, scalar)
