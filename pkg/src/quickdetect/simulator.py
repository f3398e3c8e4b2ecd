"""Monte Carlo simulation of the threshold inspection policy.

The change time, the observed path and the filtered posterior are simulated
jointly on a time grid. Whenever the posterior is at or above the threshold
a test is run; a negative result sends the posterior to ``g(pi)`` and
testing continues at the same instant until either a test is positive or
the posterior drops below the threshold.

Every path owns two Philox streams keyed by ``(seed, path index)``: one for
the change time and the test uniforms, one for the Brownian increments.
Results therefore do not depend on how paths are split across workers, and
runs that differ only in ``dt`` can share the same Brownian path (see
``SimConfig.substeps``).
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import stats

from .errors import DomainError, SimulationQualityError
from .specfun import expected_hitting_time

log = logging.getLogger(__name__)

MAX_CENSORED_FRACTION = 1e-3
_NORMAL_BLOCK = 1024
_UNIFORM_BLOCK = 64
_RECORD_CAP = 1 << 16

# kernel return codes
_DONE, _NEED_NORMALS, _NEED_UNIFORMS, _CENSORED = 0, 1, 2, 3
# slots of the kernel state vector
_T, _PI, _STEP, _NTEST, _AFTER, _NEG_AFTER, _NREC, _EXCURSION, _TAU = range(9)


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``substeps`` Brownian increments of size ``dt / substeps`` are summed
    for each Euler step, so ``SimConfig(dt=h, substeps=2)`` and
    ``SimConfig(dt=h/2)`` with the same seed see the same Brownian path.
    ``horizon_cap`` defaults to ``1000 / lambda`` when left as ``None``.
    """

    pi0: float
    threshold: float
    n_paths: int = 100_000
    dt: float = 1e-3
    seed: int = 0
    horizon_cap: float | None = None
    substeps: int = 1
    workers: int = 1

    def __post_init__(self):
        if not 0.0 <= self.pi0 <= 1.0:
            raise DomainError(f"pi0 must lie in [0, 1], got {self.pi0}")
        if not 0.0 < self.threshold < 1.0:
            raise DomainError(f"threshold must lie in (0, 1), got {self.threshold}")
        if not self.dt > 0:
            raise DomainError("dt must be > 0")
        if int(self.n_paths) < 1:
            raise DomainError("n_paths must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        if int(self.substeps) < 1 or int(self.workers) < 1:
            raise DomainError("substeps and workers must be >= 1")
        if self.horizon_cap is not None and not self.horizon_cap > 0:
            raise DomainError("horizon_cap must be > 0")

    def cap(self, lam):
        return 1000.0 / lam if self.horizon_cap is None else float(self.horizon_cap)


@dataclass
class PathOutcome:
    """One simulated episode; ``inspections`` holds ``(time, posterior before, Z)``."""

    theta: float
    n_tests: int
    tau_detect: float
    cost: float
    inspections: list = field(default_factory=list)
    censored: bool = False
    max_excursion: float = 0.0
    trace: np.ndarray | None = None


@dataclass(frozen=True)
class McSummary:
    """Sample means with standard errors ``sd / sqrt(n)`` over completed paths."""

    mean_cost: float
    stderr_cost: float
    mean_n_tests: float
    stderr_n_tests: float
    mean_tau_detect: float
    stderr_tau_detect: float
    n_paths: int
    censored: int
    n_tests_hist: dict
    tests_after_change: int
    negatives_after_change: int
    max_excursion: float
    n_tests: np.ndarray = field(repr=False, compare=False)
    cost: np.ndarray = field(repr=False, compare=False)
    tau_detect: np.ndarray = field(repr=False, compare=False)

    @property
    def false_negative_rate(self):
        if self.tests_after_change == 0:
            return float("nan")
        return self.negatives_after_change / self.tests_after_change


def _streams(seed, index):
    base = (int(seed) << 64) | (int(index) << 2)
    return (
        np.random.Generator(np.random.Philox(key=base)),
        np.random.Generator(np.random.Philox(key=base | 1)),
    )


def sample_theta(pi0, lam, rng):
    """Change time: 0 with probability ``pi0``, otherwise exponential with rate ``lam``."""
    if not 0.0 <= pi0 <= 1.0:
        raise DomainError(f"pi0 must lie in [0, 1], got {pi0}")
    u = rng.random()
    if u < pi0:
        return 0.0
    return float(rng.exponential(1.0 / lam))


@njit(nogil=True, cache=True)
def _advance(state, theta, consts, normals, n_pos, uniforms, u_pos, rec, trace):
    """Run one path until it finishes or a random block is exhausted.

    Returns ``(code, n_pos, u_pos)``. The test loop runs at the top of the
    step, so returning before a draw and re-entering is harmless.
    """
    lam, mu, sigma, eps, thr, dt, cap, substeps = (
        consts[0], consts[1], consts[2], consts[3], consts[4], consts[5], consts[6], int(consts[7])
    )
    sq = math.sqrt(dt / substeps)
    k_over = mu / (sigma * sigma)
    n_trace = trace.shape[0]
    while True:
        t = state[_T]
        pi = state[_PI]
        while pi >= thr:
            if u_pos >= uniforms.shape[0]:
                return _NEED_UNIFORMS, n_pos, u_pos
            u = uniforms[u_pos]
            u_pos += 1
            state[_NTEST] += 1.0
            z = 0
            if theta <= t:
                state[_AFTER] += 1.0
                if u <= 1.0 - eps:
                    z = 1
                else:
                    state[_NEG_AFTER] += 1.0
            nrec = int(state[_NREC])
            if nrec < rec.shape[0]:
                rec[nrec, 0] = t
                rec[nrec, 1] = pi
                rec[nrec, 2] = z
            state[_NREC] = nrec + 1
            if z == 1:
                state[_TAU] = t
                return _DONE, n_pos, u_pos
            pi = eps * pi / (1.0 - (1.0 - eps) * pi)
            state[_PI] = pi
        if t >= cap:
            return _CENSORED, n_pos, u_pos
        if n_pos + substeps > normals.shape[0]:
            return _NEED_NORMALS, n_pos, u_pos
        dw = 0.0
        for j in range(substeps):
            dw += normals[n_pos + j]
        n_pos += substeps
        dw *= sq
        step = state[_STEP] + 1.0
        t_new = step * dt
        # drift accrues only over the part of the step after the change
        active = max(t_new - theta, 0.0) - max(t - theta, 0.0)
        dx = mu * active + sigma * dw
        pi_new = pi + lam * (1.0 - pi) * dt + k_over * pi * (1.0 - pi) * (dx - mu * pi * dt)
        if pi_new < 0.0:
            state[_EXCURSION] = max(state[_EXCURSION], -pi_new)
            pi_new = 0.0
        elif pi_new > 1.0:
            state[_EXCURSION] = max(state[_EXCURSION], pi_new - 1.0)
            pi_new = 1.0
        state[_STEP] = step
        state[_T] = t_new
        state[_PI] = pi_new
        if int(step) < n_trace:
            trace[int(step)] = pi_new


def _consts(params, config):
    return np.array([
        params.lam, params.mu, params.sigma, params.epsilon, config.threshold,
        config.dt, config.cap(params.lam), float(config.substeps),
    ])


def _run(params, config, index, rec, trace):
    """Simulate path ``index``; returns ``(theta, state, censored)``."""
    r_event, r_noise = _streams(config.seed, index)
    theta = sample_theta(config.pi0, params.lam, r_event)
    consts = _consts(params, config)
    state = np.zeros(9)
    state[_PI] = config.pi0
    if trace.shape[0]:
        trace[0] = config.pi0
    block = _NORMAL_BLOCK * config.substeps
    normals = r_noise.standard_normal(block)
    uniforms = r_event.random(_UNIFORM_BLOCK)
    n_pos = u_pos = 0
    while True:
        code, n_pos, u_pos = _advance(state, theta, consts, normals, n_pos, uniforms, u_pos, rec, trace)
        if code == _DONE:
            return theta, state, False
        if code == _CENSORED:
            return theta, state, True
        if code == _NEED_NORMALS:
            normals = r_noise.standard_normal(block)
            n_pos = 0
        else:
            uniforms = r_event.random(_UNIFORM_BLOCK)
            u_pos = 0


def simulate_path(params, config, index=0, *, trace_steps=0):
    """Simulate path number ``index`` of ``config`` and return its full record.

    ``trace_steps`` > 0 also stores the posterior at the first that many grid times
    (jumps from negative tests show up at the next grid time).
    """
    rec = np.zeros((_RECORD_CAP, 3))
    trace = np.full(int(trace_steps), np.nan)
    theta, state, censored = _run(params, config, index, rec, trace)
    n_tests = int(state[_NTEST])
    nrec = min(int(state[_NREC]), _RECORD_CAP)
    inspections = [(float(r[0]), float(r[1]), int(r[2])) for r in rec[:nrec]]
    tau = float(state[_TAU]) if not censored else float(state[_T])
    cost = n_tests + params.beta * max(tau - theta, 0.0)
    return PathOutcome(
        theta=theta,
        n_tests=n_tests,
        tau_detect=tau,
        cost=cost,
        inspections=inspections,
        censored=censored,
        max_excursion=float(state[_EXCURSION]),
        trace=trace if trace_steps else None,
    )


def _run_range(params, config, lo, hi, out):
    rec = np.zeros((0, 3))
    trace = np.zeros(0)
    for i in range(lo, hi):
        theta, state, censored = _run(params, config, i, rec, trace)
        out[i] = (
            theta,
            state[_NTEST],
            state[_TAU] if not censored else state[_T],
            state[_AFTER],
            state[_NEG_AFTER],
            state[_EXCURSION],
            float(censored),
        )


def monte_carlo(params, sol, config):
    """Estimate the cost of the threshold policy from ``config.pi0``.

    ``sol`` may be ``None`` when ``config.threshold`` is set directly; when
    given, its ``a_star`` must equal the configured threshold. Raises
    :class:`SimulationQualityError` when more than 0.1% of paths hit the
    horizon cap.
    """
    if sol is not None and not math.isclose(sol.a_star, config.threshold, rel_tol=0, abs_tol=1e-12):
        raise DomainError("config.threshold must equal sol.a_star")
    n = int(config.n_paths)
    out = np.zeros((n, 7))
    workers = min(int(config.workers), n)
    if workers == 1:
        _run_range(params, config, 0, n, out)
    else:
        edges = np.linspace(0, n, workers + 1).astype(int)
        with ThreadPoolExecutor(workers) as pool:
            futures = [pool.submit(_run_range, params, config, edges[k], edges[k + 1], out) for k in range(workers)]
            for fut in futures:
                fut.result()
    censored = out[:, 6] > 0
    n_cens = int(censored.sum())
    if n_cens > MAX_CENSORED_FRACTION * n:
        raise SimulationQualityError(
            f"{n_cens} of {n} paths reached the horizon cap", censored=n_cens, n_paths=n
        )
    if n_cens:
        log.warning("%d of %d paths censored and excluded from the means", n_cens, n)
    ok = ~censored
    theta, n_tests, tau = out[ok, 0], out[ok, 1], out[ok, 2]
    cost = n_tests + params.beta * np.maximum(tau - theta, 0.0)
    m = int(ok.sum())

    def mean_se(x):
        return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(m)) if m > 1 else float("nan")

    mc, sc = mean_se(cost)
    mn, sn = mean_se(n_tests)
    mt, st = mean_se(tau)
    counts = np.bincount(n_tests.astype(int))
    hist = {int(k): int(c) for k, c in enumerate(counts) if c}
    return McSummary(
        mean_cost=mc,
        stderr_cost=sc,
        mean_n_tests=mn,
        stderr_n_tests=sn,
        mean_tau_detect=mt,
        stderr_tau_detect=st,
        n_paths=n,
        censored=n_cens,
        n_tests_hist=hist,
        tests_after_change=int(out[:, 3].sum()),
        negatives_after_change=int(out[:, 4].sum()),
        max_excursion=float(out[:, 5].max()),
        n_tests=n_tests.astype(np.int64),
        cost=cost,
        tau_detect=tau,
    )


def geometric_chisquare(n_tests, p, min_expected=5.0):
    """Chi-square goodness of fit of test counts against geometric(p) on {1, 2, ...}.

    Cells with expected count below ``min_expected`` are pooled into one tail cell.
    Returns ``(statistic, p_value, degrees_of_freedom)``.
    """
    x = np.asarray(n_tests, dtype=np.int64)
    if x.size == 0 or np.any(x < 1):
        raise DomainError("test counts must be >= 1")
    if not 0.0 < p <= 1.0:
        raise DomainError("p must lie in (0, 1]")
    n = x.size
    k_max = 1
    while n * stats.geom.pmf(k_max + 1, p) >= min_expected:
        k_max += 1
    ks = np.arange(1, k_max)
    observed = np.array([np.count_nonzero(x == k) for k in ks] + [np.count_nonzero(x >= k_max)])
    expected = n * np.append(stats.geom.pmf(ks, p), stats.geom.sf(k_max - 1, p))
    if observed.size < 2:
        return 0.0, 1.0, 0
    res = stats.chisquare(observed, expected)
    return float(res.statistic), float(res.pvalue), int(observed.size - 1)


@dataclass(frozen=True)
class DetectionTimeReport:
    empirical: float
    stderr: float
    analytic: float
    first_passage: float
    reset_passage: float
    expected_n_tests: float

    @property
    def z_score(self):
        return (self.empirical - self.analytic) / self.stderr


def analytic_detection_time(pi0, sol):
    """``E_pi0[tau_a] + (1/((1-eps) a) - 1) E_{g(a)}[tau_a]`` for ``pi0 <= a``."""
    a = sol.a_star
    if pi0 > a:
        raise DomainError("the detection-time formula needs pi0 <= a*")
    first = expected_hitting_time(pi0, a, sol.params, sol.quad)
    reset = expected_hitting_time(sol.g_a_star, a, sol.params, sol.quad)
    en = sol.expected_n_tests
    return first + (en - 1.0) * reset, first, reset, en


def detection_time_check(params, sol, config, summary=None):
    """Compare the simulated mean detection time with the closed-form value."""
    if summary is None:
        summary = monte_carlo(params, sol, config)
    total, first, reset, en = analytic_detection_time(config.pi0, sol)
    return DetectionTimeReport(summary.mean_tau_detect, summary.stderr_tau_detect, total, first, reset, en)


__all__ = [
    "SimConfig",
    "PathOutcome",
    "McSummary",
    "sample_theta",
    "simulate_path",
    "monte_carlo",
    "geometric_chisquare",
    "DetectionTimeReport",
    "analytic_detection_time",
    "detection_time_check",
]
