import numpy as np
import pytest
from scipy import stats

from quickdetect import (
    DomainError,
    SimConfig,
    SimulationQualityError,
    g,
    geometric_chisquare,
    monte_carlo,
    params_from_gamma,
    sample_theta,
    simulate_path,
)
from quickdetect.simulator import analytic_detection_time


def test_sample_theta_mixture():
    rng = np.random.default_rng(5)
    draws = np.array([sample_theta(0.3, 2.0, rng) for _ in range(20_000)])
    zero = draws == 0.0
    assert abs(zero.mean() - 0.3) < 0.015
    # the positive part is exponential with rate 2
    assert stats.kstest(draws[~zero], stats.expon(scale=0.5).cdf).pvalue > 1e-3
    assert sample_theta(1.0, 2.0, rng) == 0.0
    with pytest.raises(DomainError):
        sample_theta(1.2, 2.0, rng)


def test_certain_change_perfect_test():
    p = params_from_gamma(2.0, 0.5, 1.0, 0.0)
    out = simulate_path(p, SimConfig(pi0=1.0, threshold=0.8, n_paths=1))
    assert out.theta == 0.0
    assert out.n_tests == 1 and out.tau_detect == 0.0 and out.cost == 1.0
    assert out.inspections == [(0.0, 1.0, 1)]


def test_immediate_retests_above_threshold(ref_params, ref_solution):
    a = ref_solution.a_star
    cfg = SimConfig(pi0=0.95, threshold=a, n_paths=1, seed=3)
    for idx in range(20):
        out = simulate_path(ref_params, cfg, idx)
        # every inspection at t=0 is taken with the posterior at or above a*,
        # and the posterior before each repeat is g of the previous one
        at_zero = [r for r in out.inspections if r[0] == 0.0]
        assert at_zero[0][1] == pytest.approx(0.95)
        for prev, nxt in zip(at_zero, at_zero[1:]):
            assert prev[2] == 0
            assert nxt[1] == pytest.approx(float(g(prev[1], 0.4)), rel=1e-12)
            assert nxt[1] >= a
        assert out.n_tests == len(out.inspections)
        assert out.inspections[-1][2] == 1


def test_no_false_positive(ref_params, ref_solution):
    cfg = SimConfig(pi0=0.0, threshold=ref_solution.a_star, n_paths=200, seed=1)
    for idx in range(200):
        out = simulate_path(ref_params, cfg, idx)
        assert out.tau_detect >= out.theta
        assert all(z == 0 for t, _, z in out.inspections if t < out.theta)


def test_reproducible_across_workers(ref_params, ref_solution):
    base = dict(pi0=0.1, threshold=ref_solution.a_star, n_paths=400, seed=9)
    s1 = monte_carlo(ref_params, ref_solution, SimConfig(**base, workers=1))
    s3 = monte_carlo(ref_params, ref_solution, SimConfig(**base, workers=3))
    assert np.array_equal(s1.cost, s3.cost)
    assert s1.mean_cost == s3.mean_cost
    s_other = monte_carlo(ref_params, ref_solution, SimConfig(**{**base, "seed": 10}))
    assert s_other.mean_cost != s1.mean_cost


def test_path_matches_monte_carlo_entry(ref_params, ref_solution):
    cfg = SimConfig(pi0=0.1, threshold=ref_solution.a_star, n_paths=50, seed=4)
    s = monte_carlo(ref_params, ref_solution, cfg)
    out = simulate_path(ref_params, cfg, 17)
    assert s.n_tests[17] == out.n_tests
    assert s.cost[17] == pytest.approx(out.cost, rel=1e-15)


def test_trace_stays_in_unit_interval(ref_params, ref_solution):
    cfg = SimConfig(pi0=0.0, threshold=ref_solution.a_star, n_paths=1, seed=2)
    out = simulate_path(ref_params, cfg, 0, trace_steps=5000)
    tr = out.trace[~np.isnan(out.trace)]
    assert tr[0] == 0.0
    assert np.all((tr >= 0) & (tr <= 1))


def test_censoring_raises(ref_params, ref_solution):
    cfg = SimConfig(pi0=0.0, threshold=ref_solution.a_star, n_paths=200, seed=0, horizon_cap=0.05)
    with pytest.raises(SimulationQualityError):
        monte_carlo(ref_params, ref_solution, cfg)


def test_threshold_must_match_solution(ref_params, ref_solution):
    with pytest.raises(DomainError):
        monte_carlo(ref_params, ref_solution, SimConfig(pi0=0.0, threshold=0.5, n_paths=10))


def test_config_validation():
    with pytest.raises(DomainError):
        SimConfig(pi0=0.0, threshold=1.0)
    with pytest.raises(DomainError):
        SimConfig(pi0=0.0, threshold=0.5, dt=0.0)
    with pytest.raises(DomainError):
        SimConfig(pi0=0.0, threshold=0.5, substeps=0)
    assert SimConfig(pi0=0.0, threshold=0.5).cap(2.0) == 500.0


def test_geometric_chisquare():
    rng = np.random.default_rng(0)
    x = rng.geometric(0.6, size=20_000)
    _, pval, dof = geometric_chisquare(x, 0.6)
    assert pval > 1e-3 and dof >= 3
    _, pval_bad, _ = geometric_chisquare(x, 0.5)
    assert pval_bad < 1e-6
    with pytest.raises(DomainError):
        geometric_chisquare([0, 1], 0.5)


def test_small_run_near_value(ref_params, ref_solution):
    from quickdetect import value

    cfg = SimConfig(pi0=0.1, threshold=ref_solution.a_star, n_paths=4000, seed=21)
    s = monte_carlo(ref_params, ref_solution, cfg)
    assert abs(s.mean_cost - value(0.1, ref_solution)) < 5 * s.stderr_cost
    assert s.censored == 0
    assert sum(s.n_tests_hist.values()) == cfg.n_paths


def test_analytic_detection_time_parts(ref_solution):
    total, first, reset, en = analytic_detection_time(0.0, ref_solution)
    assert total == pytest.approx(first + (en - 1) * reset)
    assert en == pytest.approx(1 / (0.6 * ref_solution.a_star))
    with pytest.raises(DomainError):
        analytic_detection_time(0.95, ref_solution)
