"""Model parameters, the negative-test update map and the breakpoint ladder.

The posterior jumps from ``pi`` to ``g(pi)`` after a negative inspection.
Iterating the inverse map from a threshold ``a`` produces the increasing
ladder ``a, g^-1(a), g^-2(a), ...`` that accumulates at 1 and splits
``[0, 1)`` into the intervals on which the value function is unwound.
"""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, OutOfLadderError, TruncationError

DEFAULT_ETA = 1e-9
MAX_BREAKPOINTS = 10_000


@dataclass(frozen=True)
class ModelParams:
    """Validated problem constants.

    Parameters
    ----------
    lam : float
        Rate of the exponential change time (> 0).
    mu : float
        Drift acquired after the change (non-zero).
    sigma : float
        Volatility of the observed process (> 0).
    beta : float
        Cost per unit of detection delay (> 0).
    epsilon : float
        False-negative probability of a test, in ``[0, 1)``.

    ``gamma = mu**2 / (2 sigma**2)`` and ``rho = lam / gamma`` are derived.
    """

    lam: float
    mu: float
    sigma: float
    beta: float
    epsilon: float
    gamma: float = field(init=False)
    rho: float = field(init=False)

    def __post_init__(self):
        for name in ("lam", "mu", "sigma", "beta", "epsilon"):
            value = getattr(self, name)
            if not isinstance(value, (int, float, np.floating, np.integer)) or not math.isfinite(value):
                raise DomainError(f"{name} must be a finite real number, got {value!r}")
            object.__setattr__(self, name, float(value))
        if self.lam <= 0:
            raise DomainError(f"lambda must be > 0, got {self.lam}")
        if self.mu == 0:
            raise DomainError("mu must be nonzero")
        if self.sigma <= 0:
            raise DomainError(f"sigma must be > 0, got {self.sigma}")
        if self.beta <= 0:
            raise DomainError(f"beta must be > 0, got {self.beta}")
        if self.epsilon < 0:
            raise DomainError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.epsilon >= 1:
            raise DomainError(f"epsilon must be < 1, got {self.epsilon}")
        gamma = self.mu * self.mu / (2.0 * self.sigma * self.sigma)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "rho", self.lam / gamma)

    def with_epsilon(self, epsilon):
        return make_params(self.lam, self.mu, self.sigma, self.beta, epsilon)

    def with_beta(self, beta):
        return make_params(self.lam, self.mu, self.sigma, beta, self.epsilon)

    def as_dict(self):
        return {
            "lambda": self.lam,
            "mu": self.mu,
            "sigma": self.sigma,
            "beta": self.beta,
            "epsilon": self.epsilon,
            "gamma": self.gamma,
            "rho": self.rho,
        }


def make_params(lam, mu, sigma, beta, epsilon):
    """Build :class:`ModelParams`, raising :class:`DomainError` on bad input."""
    return ModelParams(lam, mu, sigma, beta, epsilon)


def params_from_gamma(lam, gamma, beta, epsilon):
    """Parametrise by the signal-to-noise rate: ``mu = sqrt(2 gamma)``, ``sigma = 1``."""
    if not (isinstance(gamma, (int, float)) and math.isfinite(gamma)) or gamma <= 0:
        raise DomainError(f"gamma must be > 0, got {gamma!r}")
    return ModelParams(lam, math.sqrt(2.0 * gamma), 1.0, beta, epsilon)


def g(pi, epsilon):
    """Posterior after a negative test: ``eps*pi / (1 - (1-eps)*pi)``.

    Works on scalars and arrays. ``g(1) = 1`` for every epsilon, including
    the 0/0 case ``epsilon = 0``.
    """
    p = np.asarray(pi, dtype=float)
    den = 1.0 - (1.0 - epsilon) * p
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0.0, epsilon * p / np.where(den > 0.0, den, 1.0), 1.0)
    # keep the fixed point at 1 exact; the quotient can round one ulp low
    out = np.where(p == 1.0, 1.0, np.clip(out, 0.0, 1.0))
    return float(out) if out.ndim == 0 else out


def g_inv(q, epsilon):
    """Inverse of :func:`g`; at ``epsilon = 0`` maps 0 to 0 and everything else to 1."""
    qa = np.asarray(q, dtype=float)
    if epsilon == 0.0:
        out = np.where(qa > 0.0, 1.0, 0.0)
    else:
        out = np.clip(qa / (epsilon + qa * (1.0 - epsilon)), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def g_prime(pi, epsilon):
    """Derivative of :func:`g` in ``pi``: ``eps / (1 - (1-eps) pi)**2``."""
    m = 1.0 - (1.0 - epsilon) * np.asarray(pi, dtype=float)
    out = epsilon / (m * m)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class IntervalDecomposition:
    """Truncated ladder ``[a, g^-1(a), g^-2(a), ...]``.

    ``breakpoints[k-1]`` is the left end of ``I_k``; ``I_0 = [0, a)``.
    """

    threshold: float
    breakpoints: tuple
    epsilon: float
    eta: float = DEFAULT_ETA

    @property
    def cutoff(self):
        return 1.0 - self.eta

    def __len__(self):
        return len(self.breakpoints)


def decompose(threshold, epsilon, eta=DEFAULT_ETA, max_count=MAX_BREAKPOINTS):
    """Breakpoint ladder of ``threshold`` under ``g^-1``, cut at the first value >= 1 - eta."""
    if not 0.0 < threshold < 1.0:
        raise DomainError(f"threshold must lie in (0, 1), got {threshold}")
    if not 0.0 < eta < 1.0 - threshold:
        raise DomainError(f"eta must lie in (0, 1 - threshold) = (0, {1.0 - threshold}), got {eta}")
    if not 0.0 <= epsilon < 1.0:
        raise DomainError(f"epsilon must lie in [0, 1), got {epsilon}")
    points = [float(threshold)]
    if epsilon > 0.0:
        cutoff = 1.0 - eta
        while points[-1] < cutoff:
            if len(points) >= max_count:
                raise TruncationError(
                    f"ladder did not reach 1 - eta = {cutoff} within {max_count} breakpoints "
                    f"(last value {points[-1]!r})"
                )
            nxt = g_inv(points[-1], epsilon)
            if nxt <= points[-1]:
                raise TruncationError(f"ladder stalled at {points[-1]!r} before reaching {cutoff}")
            points.append(nxt)
    return IntervalDecomposition(float(threshold), tuple(points), float(epsilon), float(eta))


def interval_index(pi, decomp):
    """Index ``k`` of the interval ``I_k`` containing ``pi`` (intervals are left-closed).

    Accepts a scalar or an array. Points at or beyond the last breakpoint of a
    truncated ladder raise :class:`OutOfLadderError`; with ``epsilon = 0`` the
    single interval ``I_1 = [a, 1)`` is never truncated.
    """
    bps = decomp.breakpoints
    if np.ndim(pi) == 0:
        p = float(pi)
        if not 0.0 <= p < 1.0:
            raise DomainError(f"pi must lie in [0, 1), got {p}")
        k = bisect_right(bps, p)
        if decomp.epsilon > 0.0 and k == len(bps):
            raise OutOfLadderError(f"pi = {p!r} lies beyond the ladder cutoff {bps[-1]!r}")
        return k
    arr = np.asarray(pi, dtype=float)
    if np.any((arr < 0.0) | (arr >= 1.0)):
        raise DomainError("pi must lie in [0, 1)")
    ks = np.searchsorted(np.asarray(bps), arr, side="right")
    if decomp.epsilon > 0.0 and np.any(ks == len(bps)):
        raise OutOfLadderError(f"some points lie beyond the ladder cutoff {bps[-1]!r}")
    return ks
