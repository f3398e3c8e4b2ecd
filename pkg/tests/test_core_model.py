from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quickdetect import (
    DomainError,
    OutOfLadderError,
    TruncationError,
    decompose,
    g,
    g_inv,
    interval_index,
    make_params,
    params_from_gamma,
)
from quickdetect.core_model import g_prime

probs = st.floats(min_value=1e-6, max_value=1 - 1e-6)
epss = st.floats(min_value=1e-3, max_value=0.999)


def test_derived_constants():
    p = make_params(2, 1, 1, 1.5, 0.4)
    assert p.gamma == 0.5 and p.rho == 4.0
    q = make_params(2, 3, 0.7, 1, 0)
    assert q.gamma == 9 / (2 * 0.49)
    assert q.rho == 2 / q.gamma


@pytest.mark.parametrize(
    "args, message",
    [
        ((1, 0, 1, 1, 0), "mu must be nonzero"),
        ((1, 1, 1, 1, 1.0), "epsilon must be < 1"),
        ((1, 1, 0, 1, 0), "sigma must be > 0"),
        ((0, 1, 1, 1, 0), "lambda must be > 0"),
        ((1, 1, 1, -1, 0), "beta must be > 0"),
        ((1, 1, 1, 1, -0.1), "epsilon must be >= 0"),
        ((1, float("nan"), 1, 1, 0), "finite"),
    ],
)
def test_invalid_params(args, message):
    with pytest.raises(DomainError, match=message):
        make_params(*args)


def test_params_from_gamma():
    p = params_from_gamma(2, 0.5, 1, 0.25)
    assert p.sigma == 1.0 and p.gamma == pytest.approx(0.5, rel=1e-15)
    with pytest.raises(DomainError):
        params_from_gamma(2, 0.0, 1, 0)


def test_g_examples():
    assert round(g(0.792, 0.4), 4) == 0.6037
    assert g(0.5, 0.5) == pytest.approx(1 / 3, rel=1e-15)
    for eps in (0.0, 0.3, 0.9):
        assert g(0.0, eps) == 0.0
        assert g(1.0, eps) == 1.0


def test_g_inv_examples():
    assert g_inv(g(0.7, 0.3), 0.3) == pytest.approx(0.7, rel=1e-14)
    assert g_inv(0.0, 0.3) == 0.0 and g_inv(1.0, 0.3) == 1.0
    assert g_inv(0.0, 0.0) == 0.0
    assert g_inv(1e-12, 0.0) == 1.0
    assert g_inv(0.4, 0.0) == 1.0


@pytest.mark.parametrize("eps", [0.1, 0.5, 0.9])
def test_roundtrip_on_grid(eps):
    q = np.arange(1, 1000) * 1e-3
    assert np.max(np.abs(g(g_inv(q, eps), eps) - q)) <= 1e-14


@given(probs, epss)
def test_ordering(pi, eps):
    assert g(pi, eps) < pi < g_inv(pi, eps)


@given(probs, probs, epss)
def test_g_monotone_in_pi(p1, p2, eps):
    lo, hi = sorted((p1, p2))
    assert g(lo, eps) <= g(hi, eps)


@given(probs, epss, epss)
def test_monotone_in_eps(pi, e1, e2):
    lo, hi = sorted((e1, e2))
    assert g(pi, lo) <= g(pi, hi)
    assert g_inv(pi, lo) >= g_inv(pi, hi)


def test_g_prime_matches_difference():
    pi, eps, d = 0.6, 0.3, 1e-6
    fd = (g(pi + d, eps) - g(pi - d, eps)) / (2 * d)
    assert g_prime(pi, eps) == pytest.approx(fd, rel=1e-8)


def test_ladder_eps0():
    assert decompose(0.5, 0.0).breakpoints == (0.5,)


def test_ladder_exact_start():
    bps = decompose(0.5, 0.5).breakpoints
    assert bps[0] == 0.5
    assert bps[1] == pytest.approx(2 / 3, rel=1e-15)
    assert bps[2] == pytest.approx(0.8, rel=1e-15)


def test_ladder_against_rationals():
    eta = 1e-6
    d = decompose(0.792, 0.4, eta=eta)
    q, eps = Fraction(792, 1000), Fraction(4, 10)
    exact = [q]
    while exact[-1] < 1 - Fraction(1, 10**6):
        exact.append(exact[-1] / (eps + exact[-1] * (1 - eps)))
    assert len(d) == len(exact)
    assert np.allclose(d.breakpoints, [float(x) for x in exact], rtol=0, atol=1e-14)
    assert d.breakpoints[-1] >= 1 - eta
    gaps = 1 - np.asarray(d.breakpoints)
    assert np.all(gaps[1:] < gaps[:-1])


@given(st.floats(min_value=0.01, max_value=0.99), st.floats(min_value=0.01, max_value=0.99))
@settings(max_examples=50)
def test_ladder_terminates(a, eps):
    d = decompose(a, eps, eta=1e-6)
    bps = np.asarray(d.breakpoints)
    assert np.all(np.diff(bps) > 0)
    assert bps[-1] >= 1 - 1e-6
    assert np.allclose(g_inv(bps[:-1], eps), bps[1:], rtol=1e-14, atol=0)


def test_ladder_errors():
    with pytest.raises(DomainError):
        decompose(0.0, 0.5)
    with pytest.raises(DomainError):
        decompose(0.5, 0.5, eta=0.6)
    with pytest.raises(TruncationError):
        decompose(0.5, 0.999, eta=1e-12, max_count=10)


def test_interval_index_examples():
    d = decompose(0.5, 0.5)
    assert interval_index(0.0, d) == 0
    assert interval_index(0.5, d) == 1
    assert interval_index(0.75, d) == 2
    assert list(interval_index(np.array([0.1, 0.5, 0.7, 0.75]), d)) == [0, 1, 2, 2]
    with pytest.raises(OutOfLadderError):
        interval_index(1 - 1e-12, d)
    with pytest.raises(DomainError):
        interval_index(1.0, d)
    assert interval_index(0.99999, decompose(0.5, 0.0)) == 1


@given(st.floats(min_value=0.05, max_value=0.95), st.floats(min_value=0.05, max_value=0.95), st.data())
@settings(max_examples=50)
def test_interval_index_inverts_membership(a, eps, data):
    d = decompose(a, eps, eta=1e-6)
    bps = d.breakpoints
    k = data.draw(st.integers(min_value=1, max_value=len(bps) - 1))
    lo, hi = bps[k - 1], bps[k]
    pi = data.draw(st.floats(min_value=lo, max_value=hi, exclude_max=True))
    assert interval_index(pi, d) == k
