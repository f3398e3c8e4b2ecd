"""Brute-force value iteration for the recursive stopping problem.

Each outer step solves a one-dimensional obstacle problem

    max(-L w - beta pi, w - A w_prev) = 0,   w(1) = 1 / (1 - eps),

on a uniform mesh, with the obstacle ``A w_prev`` evaluated off-grid by
linear interpolation. The inner problem is solved exactly by policy
iteration: every policy gives a tridiagonal M-matrix system.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import solve_banded
from scipy.sparse.linalg import spsolve

from .core_model import g
from .errors import SolverError
from .value import value

log = logging.getLogger(__name__)

MIN_NODES = 500
INITIAL_THRESHOLD = 0.5
_TIE = 1e-12


@dataclass(frozen=True)
class GridValue:
    """Solution of the discrete problem on ``linspace(0, 1, n)``.

    ``boundary_estimate`` is the first node of the stopping set and
    ``max_increase`` the largest pointwise increase of ``w`` between outer
    iterations (non-positive up to rounding).
    """

    grid: np.ndarray
    values: np.ndarray
    iterations: int
    sup_change: float
    boundary_estimate: float
    stop: np.ndarray
    max_increase: float
    epsilon: float

    @property
    def n(self):
        return self.grid.size


def _generator_bands(grid, params):
    """Tridiagonal bands of ``-L`` (rows 1..n-2 central or upwind, row 0 forward)."""
    n = grid.size
    h = grid[1] - grid[0]
    p = grid
    diff = params.gamma * (p * (1.0 - p)) ** 2
    drift = params.lam * (1.0 - p)
    # central differences where they keep an M-matrix, forward (upwind) otherwise
    central = diff >= 0.5 * drift * h
    lower = np.where(central, diff / h**2 - drift / (2 * h), diff / h**2)
    upper = np.where(central, diff / h**2 + drift / (2 * h), diff / h**2 + drift / h)
    # -L w_i = -(lower w_{i-1} + upper w_{i+1} - (lower + upper) w_i)
    sub = -lower
    sup = -upper
    main = lower + upper
    # pi = 0: L w = lam w'(0), one-sided
    sub[0] = 0.0
    main[0] = drift[0] / h
    sup[0] = -drift[0] / h
    return sub, main, sup


def _solve_obstacle(bands, f, obs, w_end, policy, max_policy=None):
    """Howard iteration for ``max(M w - f, w - obs) = 0`` with ``w[-1] = w_end``."""
    sub, main, sup = bands
    n = f.size
    stop = policy.copy()
    # regions grow by about one node per sweep, so allow up to n sweeps
    for _ in range(n + 10 if max_policy is None else max_policy):
        ab = np.zeros((3, n))
        rhs = np.where(stop, obs, f)
        d = np.where(stop, 1.0, main)
        lo = np.where(stop, 0.0, sub)
        up = np.where(stop, 0.0, sup)
        d[-1], lo[-1], rhs[-1] = 1.0, 0.0, w_end
        up[-1] = 0.0
        ab[0, 1:] = up[:-1]
        ab[1] = d
        ab[2, :-1] = lo[1:]
        w = solve_banded((1, 1), ab, rhs)
        cont = np.empty(n)
        cont[1:-1] = sub[1:-1] * w[:-2] + main[1:-1] * w[1:-1] + sup[1:-1] * w[2:] - f[1:-1]
        cont[0] = main[0] * w[0] + sup[0] * w[1] - f[0]
        cont[-1] = -np.inf
        gap = (w - obs) - cont
        tie = _TIE * max(1.0, float(np.max(np.abs(w))))
        # switch only on a clear improvement, so rounding cannot make the policy cycle
        new = np.where(stop, gap > -tie, gap > tie)
        new[-1] = True
        if np.array_equal(new, stop):
            return w, stop
        stop = new
    raise SolverError("policy iteration did not settle", {"policy_changes": int(np.count_nonzero(new != stop))})


def _interp_matrix(x, grid):
    """Sparse matrix of linear interpolation weights from ``grid`` to ``x``."""
    n = grid.size
    h = grid[1] - grid[0]
    j = np.clip(np.floor(x / h).astype(int), 0, n - 2)
    t = np.clip((x - grid[j]) / h, 0.0, 1.0)
    rows = np.repeat(np.arange(x.size), 2)
    cols = np.stack([j, j + 1], axis=1).ravel()
    vals = np.stack([1.0 - t, t], axis=1).ravel()
    return sparse.csr_matrix((vals, (rows, cols)), shape=(x.size, n))


def threshold_policy_value(grid, params, threshold=INITIAL_THRESHOLD):
    """Discrete cost of testing whenever the posterior is at or above ``threshold``.

    Any fixed policy costs at least the optimum, so this is a valid
    starting point from above for the monotone iteration.
    """
    eps = params.epsilon
    n = grid.size
    sub, main, sup = _generator_bands(grid, params)
    stop = grid >= threshold
    m = 1.0 - (1.0 - eps) * grid
    cont = sparse.diags([sub[1:], main, sup[:-1]], [-1, 0, 1], format="csr")
    test = sparse.identity(n, format="csr") - sparse.diags(m) @ _interp_matrix(g(grid, eps), grid)
    S = sparse.diags(stop.astype(float))
    K = (S @ test + (sparse.identity(n) - S) @ cont).tolil()
    rhs = np.where(stop, 1.0, params.beta * grid)
    K[n - 1, :] = 0.0
    K[n - 1, n - 1] = 1.0
    rhs[-1] = 1.0 / (1.0 - eps)
    return spsolve(K.tocsr(), rhs), stop


def value_iteration(params, n=4000, tol=1e-10, max_iter=10_000):
    """Monotone value iteration ``w_{k+1} = obstacle solve with A w_k``.

    Starts from the cost of the fixed policy 'test once the posterior
    reaches 1/2', which lies above the fixed point, so the iterates decrease;
    stops when the sup-norm change drops below ``tol``.
    """
    if int(n) < MIN_NODES:
        raise SolverError(f"grid needs at least {MIN_NODES} nodes, got {n}")
    if not tol > 0:
        raise SolverError("tol must be > 0")
    n = int(n)
    eps = params.epsilon
    grid = np.linspace(0.0, 1.0, n)
    w_end = 1.0 / (1.0 - eps)
    bands = _generator_bands(grid, params)
    f = params.beta * grid
    gp = g(grid, eps)
    m = 1.0 - (1.0 - eps) * grid
    w, stop = threshold_policy_value(grid, params)
    change = np.inf
    max_increase = -np.inf
    for it in range(1, int(max_iter) + 1):
        obs = 1.0 + m * np.interp(gp, grid, w)
        w_new, stop = _solve_obstacle(bands, f, obs, w_end, stop)
        diff = w_new - w
        change = float(np.max(np.abs(diff)))
        max_increase = max(max_increase, float(diff.max()))
        w = w_new
        if change <= tol:
            break
    else:
        raise SolverError(
            f"value iteration did not converge in {max_iter} iterations",
            {"sup_change": change, "n": n},
        )
    first = int(np.argmax(stop))
    log.debug("grid solve n=%d iterations=%d boundary=%.6f", n, it, grid[first])
    return GridValue(grid, w, it, change, float(grid[first]), stop, max_increase, eps)


def compare_to_closed_form(gridval, sol):
    """Sup gap between the grid values and the closed-form value, and the boundary gap."""
    exact = value(gridval.grid, sol)
    sup_gap = float(np.max(np.abs(exact - gridval.values)))
    return sup_gap, abs(gridval.boundary_estimate - sol.a_star)


__all__ = ["GridValue", "threshold_policy_value", "value_iteration", "compare_to_closed_form"]
