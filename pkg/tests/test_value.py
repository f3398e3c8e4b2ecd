import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quickdetect import A_op, DomainError, classical_reduction_check, diagnostics, params_from_gamma, solve_boundary, value
from quickdetect.value import breakpoint_jumps, value_and_derivatives, value_bound


@pytest.fixture(scope="module")
def eps_solutions():
    return {eps: solve_boundary(params_from_gamma(2.0, 0.5, 1.0, eps)) for eps in (0.0, 0.25, 0.5)}


def test_A_op_trivial():
    f = lambda x: 3.0 + np.asarray(x)  # noqa: E731
    assert A_op(f, 1.0, 0.3) == pytest.approx(1 + 0.3 * f(1.0))
    assert A_op(f, 0.0, 0.3) == pytest.approx(1 + f(0.0))


@pytest.mark.parametrize("eps", [0.0, 0.25, 0.4, 0.5, 0.9])
def test_terminal_value(eps):
    sol = solve_boundary(params_from_gamma(2.0, 0.5, 1.0, eps))
    assert abs(value(1.0, sol) - 1 / (1 - eps)) <= 1e-9


def test_value_at_zero_is_C(ref_solution):
    assert value(0.0, ref_solution) == ref_solution.C


def test_fixed_point_above_boundary(ref_solution):
    sol = ref_solution
    pts = np.linspace(sol.a_star, 0.999, 50)
    lhs = value(pts, sol)
    rhs = A_op(lambda x: value(x, sol), pts, sol.epsilon)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


def test_value_ordering_in_eps(eps_solutions):
    pis = np.arange(1, 10) / 10
    curves = {eps: value(pis, s) for eps, s in eps_solutions.items()}
    for c in curves.values():
        assert np.all(np.diff(c) < 0)
        assert np.all(np.diff(c, 2) <= 1e-12)
    assert np.all(curves[0.0] < curves[0.25]) and np.all(curves[0.25] < curves[0.5])


def test_array_and_flags(ref_solution):
    pts = np.array([0.0, 0.5, 0.9, 1 - 1e-13, 1.0])
    vals, flags = value(pts, ref_solution, return_flags=True)
    assert not flags.any()
    assert vals[-1] == pytest.approx(1 / 0.6)
    assert abs(vals[-2] - vals[-1]) < 1e-8
    with pytest.raises(DomainError):
        value(1.5, ref_solution)


def test_derivatives_against_differences(ref_solution):
    sol = ref_solution
    pts = np.array([0.3, 0.7, 0.85, 0.95])
    d = 1e-6
    u, u1, u2 = value_and_derivatives(pts, sol)
    up, u1p, _ = value_and_derivatives(pts + d, sol)
    um, u1m, _ = value_and_derivatives(pts - d, sol)
    assert np.allclose(u1, (up - um) / (2 * d), atol=1e-6)
    assert np.allclose(u2, (u1p - u1m) / (2 * d), atol=1e-5)


@pytest.mark.parametrize("eps", [0.0, 0.4, 0.9])
def test_breakpoint_continuity(eps):
    sol = solve_boundary(params_from_gamma(2.0, 0.5, 1.0, eps))
    jv, jd = breakpoint_jumps(sol, n=10, delta=1e-8)
    assert jv <= 1e-6
    assert jd <= 1e-4


def test_bounded(ref_solution):
    vals = value(np.linspace(0, 1, 201), ref_solution)
    assert np.max(np.abs(vals)) <= value_bound(ref_solution)


def test_diagnostics_reference(ref_solution):
    t0 = time.perf_counter()
    d = diagnostics(ref_solution)
    assert time.perf_counter() - t0 < 30
    assert d.ode_residual_max <= 1e-6
    assert d.smooth_fit_gap <= 1e-6
    assert d.variational_min >= -1e-8
    assert d.obstacle_gap_min >= -1e-8
    assert d.concavity_violations == 0
    assert d.kappa > 0


@pytest.mark.parametrize("beta, eps", [(0.1, 0.9), (100.0, 0.7), (1.0, 0.0)])
def test_diagnostics_other_params(beta, eps):
    d = diagnostics(solve_boundary(params_from_gamma(2.0, 0.5, beta, eps)))
    assert d.ode_residual_max <= 1e-6
    assert d.variational_min >= -1e-8
    assert d.obstacle_gap_min >= -1e-8
    assert d.concavity_violations == 0


def test_classical_reduction(base_params):
    r = classical_reduction_check(base_params)
    assert abs(r.C_plus_psi) <= 1e-8
    assert abs(r.boundary_identity) <= 1e-8
    assert r.boundary_gap <= 1e-6
    assert r.affine_gap <= 1e-10
    assert r.scaling_gap <= 1e-10
    assert r.beta_tilde == pytest.approx(base_params.beta / r.C)


def test_classical_reduction_needs_eps0(ref_params):
    with pytest.raises(DomainError):
        classical_reduction_check(ref_params)


@given(st.floats(min_value=0.0, max_value=1.0), st.floats(min_value=0.0, max_value=1.0))
@settings(max_examples=30, deadline=None)
def test_monotone_decreasing(x, y):
    sol = solve_boundary(params_from_gamma(2.0, 0.5, 1.5, 0.4))
    lo, hi = sorted((x, y))
    assert value(lo, sol) >= value(hi, sol) - 1e-12
