"""Independent reference computations used only by the tests.

Nothing here imports the package's numerical kernels.
"""
import itertools
import math
from collections import Counter

import mpmath
import numpy as np

mpmath.mp.dps = 40


def enumerate_KM(masses, n, r):
    """E K_{n,r} and E M_{n,r} by summing over all |S|^n outcomes."""
    ek, em = [], []
    idx = range(len(masses))
    for outcome in itertools.product(idx, repeat=n):
        prob = math.prod(masses[i] for i in outcome)
        counts = Counter(outcome)
        hit = [a for a in idx if counts.get(a, 0) == r]
        ek.append(prob * len(hit))
        em.append(prob * sum(masses[a] for a in hit))
    return math.fsum(ek), math.fsum(em)


def zipf_mass(alpha):
    s = 1 / mpmath.mpf(alpha)
    z = mpmath.zeta(s)
    return lambda k: mpmath.power(k, -s) / z


def geometric_mass(q):
    q = mpmath.mpf(q)
    return lambda k: (1 - q) * q ** (k - 1)


def direct_EM(mass, n, r, poisson=None):
    """sum_k C(n,r) p^(1+r) (1-p)^(n-r), or the Poisson analogue, by mpmath nsum."""
    if poisson is None:
        c = mpmath.binomial(n, r)
        f = lambda k: c * mass(k) ** (1 + r) * (1 - mass(k)) ** (n - r)  # noqa: E731
    else:
        lam = mpmath.mpf(poisson)
        c = lam ** r / mpmath.factorial(r)
        f = lambda k: c * mass(k) ** (1 + r) * mpmath.exp(-lam * mass(k))  # noqa: E731
    return float(_nsum(f))


def direct_EK(mass, n, r):
    c = mpmath.binomial(n, r)
    return float(_nsum(lambda k: c * mass(k) ** r * (1 - mass(k)) ** (n - r)))


def _nsum(f):
    # sum a generous head exactly, extrapolate only the smooth tail
    head = 2000
    s = mpmath.fsum(f(k) for k in range(1, head + 1))
    return s + mpmath.nsum(f, [head + 1, mpmath.inf], method="euler-maclaurin")


def zipf_sum(alpha, n, r, kind="EM", lam=None):
    """Zipf expectations by a float64 head and a power series in p for the tail.

    Past the head every p_k is small, so (1-p)^(n-r) or e^(-lam p) expands in
    powers of p and each power sums to a Hurwitz zeta value.
    """
    with mpmath.workdps(80):
        s = 1 / mpmath.mpf(alpha)
        z = mpmath.zeta(s)
        scale = lam if kind == "poisson" else n
        head = int(min(4e6, max(100, float((20 * scale / z) ** (1 / s)))))
        k = np.arange(1, head + 1, dtype=float)
        p = k ** (-float(s)) / float(z)
        if kind == "EM":
            a, logc, m = 1 + r, float(mpmath.log(mpmath.binomial(n, r))), n - r
        elif kind == "EK":
            a, logc, m = r, float(mpmath.log(mpmath.binomial(n, r))), n - r
        else:
            a, logc, m = 1 + r, float(r * mpmath.log(lam) - mpmath.loggamma(r + 1)), None
        if m is None:
            terms = np.exp(logc + a * np.log(p) - lam * p)
        else:
            terms = np.exp(logc + a * np.log(p) + m * np.log1p(-p))
        head_sum = math.fsum(terms)
        tail = mpmath.mpf(0)
        for j in range(0, 400):
            if m is None:
                coef = (-mpmath.mpf(lam)) ** j / mpmath.factorial(j)
            else:
                if j > m:
                    break
                coef = (-1) ** j * mpmath.binomial(m, j)
            term = coef * mpmath.zeta((a + j) * s, head + 1) / z ** (a + j)
            tail += term
            if j > 5 and abs(term) < mpmath.mpf(10) ** -40 * abs(tail):
                break
        return head_sum + float(mpmath.exp(logc) * tail)


def finite_EM(masses, n, r, poisson=None):
    if poisson is None:
        c = mpmath.binomial(n, r)
        return float(mpmath.fsum(c * mpmath.mpf(p) ** (1 + r) * (1 - mpmath.mpf(p)) ** (n - r) for p in masses))
    lam = mpmath.mpf(poisson)
    return float(mpmath.fsum(lam ** r / mpmath.factorial(r) * mpmath.mpf(p) ** (1 + r) * mpmath.exp(-lam * p)
                             for p in masses))


def finite_EK(masses, n, r):
    c = mpmath.binomial(n, r)
    return float(mpmath.fsum(c * mpmath.mpf(p) ** r * (1 - mpmath.mpf(p)) ** (n - r) for p in masses))


def nu_count(masses, eps):
    return sum(1 for p in masses if p >= eps)


def power_integral_of_nu(masses, lo, hi, tau):
    """int_lo^hi x^(tau-1) nu(x) dx with nu piecewise constant between atoms."""
    cuts = sorted({lo, hi} | {p for p in masses if lo < p < hi})
    total = mpmath.mpf(0)
    for a, b in zip(cuts, cuts[1:]):
        level = nu_count(masses, (a + b) / 2)
        total += level * (mpmath.mpf(b) ** tau - mpmath.mpf(a) ** tau) / tau
    return float(total)


def kernel_quad(r, m, c, a, b):
    """int_a^b u^r (1 - c u)^m du by mpmath quadrature."""
    return float(mpmath.quad(lambda u: u ** r * (1 - c * u) ** m, [a, b]))


def brute_kappa(masses, side, eps, grid):
    """sup of the doubling ratio over a dense grid of u in (0, eps]."""
    best = -math.inf
    for u in grid:
        if u > eps:
            continue
        a, b = nu_count(masses, u / 2), nu_count(masses, u)
        num, den = (a, b) if side == "plus" else (b, a)
        val = 1.0 if num == den == 0 else (math.inf if den == 0 else num / den)
        best = max(best, val)
    return best


def beta_reg(a, b, x):
    """I_x(a, b) from the beta continued fraction in 50-digit arithmetic."""
    with mpmath.workdps(50):
        a, b, x = mpmath.mpf(a), mpmath.mpf(b), mpmath.mpf(x)
        if x == 0 or x == 1:
            return float(x)
        if x < (a + 1) / (a + b + 2):
            return float(_beta_cf_side(a, b, x))
        return float(1 - _beta_cf_side(b, a, 1 - x))


def _beta_cf_side(a, b, x):
    front = mpmath.exp(a * mpmath.log(x) + b * mpmath.log1p(-x) - mpmath.log(a) - mpmath.log(mpmath.beta(a, b)))
    tiny = mpmath.mpf(10) ** -200
    c, d = mpmath.mpf(1), 1 - (a + b) * x / (a + 1)
    d = 1 / (d if abs(d) > tiny else tiny)
    f = d
    for m in range(1, 10 ** 6):
        num = m * (b - m) * x / ((a + 2 * m - 1) * (a + 2 * m))
        for step in (num, -(a + m) * (a + b + m) * x / ((a + 2 * m) * (a + 2 * m + 1))):
            d = 1 + step * d
            d = 1 / (d if abs(d) > tiny else tiny)
            c = 1 + step / c
            c = c if abs(c) > tiny else tiny
            f *= c * d
        if abs(c * d - 1) < mpmath.mpf(10) ** -45:
            return front * f
    raise RuntimeError("continued fraction did not converge")


def hurwitz(s, q):
    """Direct 60-digit head plus an Euler-Maclaurin tail with three corrections."""
    with mpmath.workdps(60):
        s, q = mpmath.mpf(s), mpmath.mpf(q)
        head_terms = 1000
        head = mpmath.fsum((q + k) ** (-s) for k in range(head_terms))
        a = q + head_terms
        tail = a ** (1 - s) / (s - 1) + a ** (-s) / 2
        tail += s * a ** (-s - 1) / 12
        tail -= s * (s + 1) * (s + 2) * a ** (-s - 3) / 720
        tail += s * (s + 1) * (s + 2) * (s + 3) * (s + 4) * a ** (-s - 5) / 30240
        return float(head + tail)


def kernel_exact(r, m, c, a, b):
    """int_a^b u^r (1 - c u)^m du by binomial expansion in rational arithmetic."""
    from fractions import Fraction
    a, b, c = Fraction(a), Fraction(b), Fraction(c)
    total = Fraction(0)
    coef = 1
    for j in range(m + 1):
        k = r + j + 1
        total += coef * (-c) ** j * (b ** k - a ** k) / k
        coef = coef * (m - j) // (j + 1)
    return float(total)
