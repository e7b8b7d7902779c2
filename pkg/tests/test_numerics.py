import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from occupancy.numerics import (
    DomainError, SlowlyVarying, UnsupportedFormError, binom, constant_ell, ell_circ_beta,
    hurwitz_zeta, kernel_integral, log_binom, log_binom_pmf_array, log_poisson_pmf_array,
    lower_incomplete_gamma, regularized_incomplete_beta, riemann_zeta,
)

from oracles import beta_reg, hurwitz, kernel_exact


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


# incomplete gamma

def test_gamma_examples():
    assert rel(lower_incomplete_gamma(1, 0.5), 1 - math.exp(-0.5)) < 1e-14
    assert rel(lower_incomplete_gamma(0.5, math.inf), math.sqrt(math.pi)) < 1e-14
    assert lower_incomplete_gamma(0, 0.5) == math.inf
    assert lower_incomplete_gamma(0, 0.0) == 0.0
    oracle = float(mpmath.quad(lambda u: mpmath.sqrt(u) * mpmath.exp(-u), [0, 2]))
    assert rel(lower_incomplete_gamma(1.5, 2), oracle) < 1e-12


def test_gamma_domain():
    with pytest.raises(DomainError):
        lower_incomplete_gamma(-0.1, 1.0)
    with pytest.raises(DomainError):
        lower_incomplete_gamma(1.0, -1.0)


@settings(max_examples=300, deadline=None)
@given(st.floats(1e-3, 50), st.floats(0, 100))
def test_gamma_against_mpmath(t, x):
    ref = float(mpmath.gammainc(t, 0, x))
    got = lower_incomplete_gamma(t, x)
    assert got == ref == 0.0 or rel(got, ref) < 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 20), st.floats(1e-6, 60), st.floats(0, 5))
def test_gamma_monotone_and_crude_bounds(t, x, dx):
    g = lower_incomplete_gamma(t, x)
    assert lower_incomplete_gamma(t, x + dx) >= g * (1 - 1e-13)
    assert g <= x ** t / t * (1 + 1e-12)
    assert g >= x ** t / (t * math.exp(x)) * (1 - 1e-12)


# incomplete beta

def test_beta_examples():
    assert rel(regularized_incomplete_beta(1, 1, 0.5), 0.5) < 1e-14
    assert regularized_incomplete_beta(2, 3, 1) == 1.0
    assert rel(regularized_incomplete_beta(1, 10, 0.1), 1 - 0.9 ** 10) < 1e-13
    with pytest.raises(DomainError):
        regularized_incomplete_beta(1, 1, 1.5)


@settings(max_examples=1000, deadline=None)
@given(st.floats(0.05, 1e3), st.floats(0.05, 1e3), st.floats(0, 1))
def test_beta_symmetry(a, b, x):
    # y = fl(1 - x) and x2 = fl(1 - y) satisfy x2 + y = 1 exactly
    y = 1 - x
    x2 = 1 - y
    s = regularized_incomplete_beta(a, b, x2) + regularized_incomplete_beta(b, a, y)
    assert abs(s - 1) < 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(0.1, 1e6), st.floats(0.1, 1e6), st.floats(0.001, 0.999))
def test_beta_against_reference(a, b, x):
    ref = beta_reg(a, b, x)
    got = regularized_incomplete_beta(a, b, x)
    if ref > 1e-280:
        assert rel(got, ref) < 1e-12 or abs(got - ref) < 1e-300
    else:
        assert got < 1e-270


# kernel integral

def test_kernel_examples():
    assert rel(kernel_integral(0, 0, 1, 0.2, 0.7), 0.5) < 1e-14
    assert rel(kernel_integral(0, 9, 0.5, 0, 0.2), 0.2 * (1 - 0.9 ** 10)) < 1e-13
    assert rel(kernel_integral(1, 0, 1, 0, 1), 0.5) < 1e-14
    with pytest.raises(DomainError):
        kernel_integral(0, 1, 2.0, 0, 0.6)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 6), st.integers(0, 400), st.sampled_from([0.5, 1.0, 2.0]),
       st.integers(0, 1024), st.integers(0, 1024))
def test_kernel_against_exact(r, m, c, i, j):
    # dyadic endpoints keep the rational oracle fast
    a, b = sorted((i / 1024 / c, j / 1024 / c))
    b = min(b, 1 / c)
    a = min(a, b)
    ref = kernel_exact(r, m, c, a, b)
    got = kernel_integral(r, m, c, a, b)
    assert abs(got - ref) <= 1e-9 * abs(ref) + 1e-300


# zeta and binomials

def test_zeta_examples():
    assert rel(riemann_zeta(2), math.pi ** 2 / 6) < 1e-13
    assert rel(riemann_zeta(3), float(mpmath.zeta(3))) < 1e-13
    assert rel(riemann_zeta(10), float(mpmath.zeta(10))) < 1e-13
    with pytest.raises(DomainError):
        riemann_zeta(1.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(1.0001, 40), st.floats(0.01, 1e4))
def test_hurwitz_against_reference(s, q):
    assert rel(hurwitz_zeta(s, q), hurwitz(s, q)) < 1e-12


def test_binomials():
    assert binom(10, 3) == pytest.approx(120, rel=1e-14)
    assert log_binom(10 ** 7, 5) == pytest.approx(float(mpmath.log(mpmath.binomial(10 ** 7, 5))), rel=1e-14)


# ell circ beta

def test_ell_circ_closed_form():
    assert rel(ell_circ_beta(constant_ell(1), 0.5, 2), 1.0) < 1e-14
    # u = e^v turns the slowly decaying integrand into an exponential
    ref = float(mpmath.sqrt(mpmath.quad(lambda v: mpmath.exp((0.9 - 1) * v), [mpmath.log(100), mpmath.inf])))
    assert rel(ell_circ_beta(constant_ell(1), 0.9, 50), ref) < 1e-10
    assert rel(ell_circ_beta(constant_ell(3.5), 0.9, 50), 3.5 * ref) < 1e-14


@pytest.mark.xfail(strict=True, reason="quoted 2.51155 disagrees with the closed form 2.51189")
def test_ell_circ_quoted_value():
    assert abs(ell_circ_beta(constant_ell(1), 0.9, 50) - 2.51155) < 1e-5


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(1, 1e6))
def test_ell_circ_normalisation(beta, x):
    v = ell_circ_beta(constant_ell(1), beta, x)
    assert abs(v * (2 * x) ** ((1 - beta) / 2) * math.sqrt(1 - beta) - 1) < 1e-13


@pytest.mark.parametrize("power", [-1.0, 0.5, 2.0])
def test_ell_circ_log_power(power):
    ell = SlowlyVarying("log_power", 1.3, power)
    beta, x = 0.6, 5.0
    f = lambda u: (1.3 * mpmath.log(mpmath.e + u) ** power) ** 2 * u ** (beta - 2)  # noqa: E731
    g = lambda v: f(mpmath.exp(v)) * mpmath.exp(v)  # noqa: E731
    ref = float(mpmath.sqrt(mpmath.quad(g, [mpmath.log(2 * x), 10, 40, 200, mpmath.inf])))
    assert rel(ell_circ_beta(ell, beta, x), ref) < 1e-8


def test_ell_unsupported():
    with pytest.raises(UnsupportedFormError):
        SlowlyVarying("exotic", 1.0)
    with pytest.raises(UnsupportedFormError):
        ell_circ_beta(lambda x: 1.0, 0.5, 2)


# point masses

def _binom_log_ref(n, k, p):
    return float(mpmath.log(mpmath.binomial(n, k)) + k * mpmath.log(p) + (n - k) * mpmath.log1p(-mpmath.mpf(p)))


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 10 ** 7), st.floats(-10, 10), st.floats(1e-9, 1 - 1e-9))
def test_binom_pmf_near_mode(n, z, p):
    # within 10 sd of the mean, where sums take their mass, the log is
    # accurate to ~1e-14 absolute plus the conditioning of rounding n p and
    # 1 - p, |k - n p| (1/p + 1/(1-p)) ulp
    k = int(round(n * p + z * math.sqrt(n * p * (1 - p))))
    if not 0 <= k <= n:
        return
    got = float(log_binom_pmf_array(n, k, np.array([p]))[0])
    ref = _binom_log_ref(n, k, p)
    cond = abs(k - n * p) * (1 / p + 1 / (1 - p))
    assert abs(got - ref) < 2e-14 + 1e-15 * abs(ref) + 4.4e-16 * cond


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 10 ** 7), st.floats(0, 1), st.floats(1e-9, 1 - 1e-9))
def test_binom_pmf_far(n, frac, p):
    # far out the deviance is a difference of terms of size ~k, so the
    # error scales with k + n p
    k = int(round(frac * n))
    ref = _binom_log_ref(n, k, p)
    got = float(log_binom_pmf_array(n, k, np.array([p]))[0])
    if ref > -700:
        assert abs(got - ref) < 1e-13 + 1e-15 * (k + n * p)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(1e-6, 1e6))
def test_poisson_pmf(k, mu):
    ref = k * mpmath.log(mu) - mu - mpmath.loggamma(k + 1)
    got = float(log_poisson_pmf_array(k, np.array([mu]))[0])
    if ref > -700:
        assert abs(got - float(ref)) < 1e-13 + 1e-15 * abs(float(ref))
