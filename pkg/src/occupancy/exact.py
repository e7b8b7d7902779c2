"""Exact expected occupancy counts and masses.

E M_{n,r} = C(n,r) sum_a p_a^(r+1) (1-p_a)^(n-r)
E K_{n,r} = C(n,r) sum_a p_a^r (1-p_a)^(n-r)

Finite laws are summed outright.  Geometric tails are cut once the crude
bound C(n,r) p_K^r tail(K) is negligible.  Zipf tails decay too slowly for
that, so past the horizon K the summand k -> h(p_k) is convex and the tail is
bracketed by

    G(K+1) + h(p_{K+1})/2  <=  sum_{k>K} h(p_k)  <=  G(K+1/2),

G(X) = int_X^inf h(p(x)) dx being an incomplete beta integral.  The midpoint
is returned and the half-width is the certificate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dist import HORIZON_CAP, Distribution
from .numerics import (
    kernel_integral,
    log_binom,
    log_binom_pmf_array,
    regularized_incomplete_beta,
    regularized_incomplete_beta_array,
)

REL_TOL = 1e-12
ABS_TOL = 1e-15


class PrecisionError(RuntimeError):
    """Requested accuracy not reachable within the horizon cap."""

    def __init__(self, message: str, certificate: float):
        super().__init__(message)
        self.certificate = certificate


@dataclass(frozen=True)
class Certified:
    value: float
    certificate: float  # |true - value| <= certificate


def _check(n: int, r: int) -> None:
    if n < 1 or int(n) != n:
        raise ValueError("n must be a positive integer")
    if r < 0 or r > n or int(r) != r:
        raise ValueError("need 0 <= r <= n")


def _log_terms(p: np.ndarray, n: int, r: int, a: float) -> np.ndarray:
    """log(C(n, r) p^a (1-p)^(n-r)) for a in {r, r+1}: p^(a-r) times the
    binomial point mass, which stays accurate when n is large."""
    out = log_binom_pmf_array(n, r, p)
    if a > r:
        with np.errstate(divide="ignore"):
            out = out + (a - r) * np.log(p)
    return out


def _power_sum(p, mult, n, r, a) -> float:
    terms = np.exp(_log_terms(np.asarray(p, dtype=float), n, r, a))
    return math.fsum(terms * mult)


def _survival_sum(p, mult, n, r) -> float:
    """sum mult * P(Bin(n, p) >= r) = mult * I_p(r, n-r+1)."""
    vals = regularized_incomplete_beta_array(float(r), float(n - r + 1), np.asarray(p, dtype=float))
    return math.fsum(vals * mult)


# ---------------------------------------------------------------------------
# zipf tail machinery
# ---------------------------------------------------------------------------

def _zipf_horizon(d: Distribution, n: int, a_min: float) -> int:
    """Smallest K with n p_K <= 0.04 a_min/(s+1), which makes the summand
    convex in k beyond K."""
    s = 1.0 / d.alpha
    target = 0.04 * a_min / ((s + 1.0) * n)
    k = max(10, d.nu(target) + 1)
    return k


def _zipf_p(d: Distribution, x: float) -> float:
    return x ** (-1.0 / d.alpha) / d.zeta


def _zipf_G(d: Distribution, kind: str, n: int, r: int, log_c: float, x: float) -> float:
    """int_x^inf h(p(t)) dt for the summand of `kind`."""
    al = d.alpha
    P = _zipf_p(d, x)
    front = d.zeta ** (-al)
    if kind == "EM":
        return al * front * math.exp(log_c) * kernel_integral(r - al, n - r, 1.0, 0.0, P)
    if kind == "EK":
        return al * front * math.exp(log_c) * kernel_integral(r - 1 - al, n - r, 1.0, 0.0, P)
    # survival: integrate by parts against u^(-alpha-1)
    m = n - r + 1
    lb_ratio = (math.lgamma(r - al) + math.lgamma(m) - math.lgamma(r - al + m)
                - (math.lgamma(r) + math.lgamma(m) - math.lgamma(r + m)))
    part = math.exp(lb_ratio) * regularized_incomplete_beta(r - al, m, P)
    return front * (part - regularized_incomplete_beta(r, m, P) * P ** (-al))


def _zipf_sum(d: Distribution, kind: str, n: int, r: int) -> Certified:
    log_c = log_binom(n, r)
    if kind == "EM":
        a, a_min = r + 1.0, r + 1.0
    elif kind == "EK":
        a, a_min = float(r), float(r)
    else:
        a, a_min = float(r), float(r)
    k = _zipf_horizon(d, n, a_min)
    while True:
        ps = d.mass(np.arange(1, k + 1, dtype=float))
        if kind == "tail":
            head = _survival_sum(ps, 1.0, n, r)
            h_next = float(regularized_incomplete_beta_array(float(r), float(n - r + 1), d.mass(k + 1.0)))
        else:
            head = _power_sum(ps, 1.0, n, r, a)
            h_next = float(np.exp(_log_terms(np.array([d.mass(k + 1.0)]), n, r, a))[0])
        lo = _zipf_G(d, kind, n, r, log_c, k + 1.0) + 0.5 * h_next
        hi = _zipf_G(d, kind, n, r, log_c, k + 0.5)
        lo, hi = min(lo, hi), max(lo, hi)
        value = head + 0.5 * (lo + hi)
        cert = 0.5 * (hi - lo) + 4e-16 * abs(value)
        if cert <= max(REL_TOL * abs(value), ABS_TOL):
            return Certified(value, cert)
        if k >= HORIZON_CAP:
            raise PrecisionError(f"zipf tail certificate {cert:.3g} at horizon cap", cert)
        k = min(HORIZON_CAP, 4 * k)


# ---------------------------------------------------------------------------
# geometric truncation
# ---------------------------------------------------------------------------

def _geometric_sum(d: Distribution, kind: str, n: int, r: int) -> Certified:
    log_c = log_binom(n, r)
    # tail bound: C p_K^e tail(K), e = r for EM, r-1 for EK and survival
    e = r if kind == "EM" else r - 1
    # start past the mode so p_K is small
    k = max(16, d.nu(min(1.0, (r + 1.0) / n)) + 16)
    k_cap = max(1, d.nu(1e-300))
    while True:
        k = min(k, k_cap)
        ps = d.mass(np.arange(1, k + 1, dtype=float))
        if kind == "tail":
            value = _survival_sum(ps, 1.0, n, r)
        elif kind == "EM":
            value = _power_sum(ps, 1.0, n, r, r + 1.0)
        else:
            value = _power_sum(ps, 1.0, n, r, float(r))
        pk = float(ps[-1])
        cert = math.exp(log_c + e * math.log(pk)) * d.tail_mass(k)
        if cert <= max(REL_TOL * abs(value), ABS_TOL) or k >= k_cap:
            if cert > max(REL_TOL * abs(value), ABS_TOL):
                raise PrecisionError("geometric tail certificate not reached", cert)
            return Certified(value, cert)
        k *= 2


def _dispatch(d: Distribution, kind: str, n: int, r: int) -> Certified:
    if d.is_finite:
        vals, mult = d.distinct_atoms()
        if kind == "EM":
            v = _power_sum(vals, mult, n, r, r + 1.0)
        elif kind == "EK":
            v = _power_sum(vals, mult, n, r, float(r))
        else:
            v = _survival_sum(vals, mult, n, r)
        return Certified(v, 0.0)
    if d.family == "zipf":
        return _zipf_sum(d, kind, n, r)
    return _geometric_sum(d, kind, n, r)


# ---------------------------------------------------------------------------
# public surface
# ---------------------------------------------------------------------------

def exact_EM_certified(d: Distribution, n: int, r: int) -> Certified:
    _check(n, r)
    return _dispatch(d, "EM", n, r)


def exact_EM(d: Distribution, n: int, r: int) -> float:
    """E M_{n,r}, the expected mass of letters seen exactly r times."""
    return exact_EM_certified(d, n, r).value


def exact_EK_certified(d: Distribution, n: int, r: int) -> Certified:
    _check(n, r)
    if r == 0:
        if not d.is_finite:
            return Certified(math.inf, 0.0)
    return _dispatch(d, "EK", n, r)


def exact_EK(d: Distribution, n: int, r: int) -> float:
    """E K_{n,r}, the expected number of letters seen exactly r times."""
    return exact_EK_certified(d, n, r).value


def exact_EK_tail_certified(d: Distribution, n: int, r: int) -> Certified:
    _check(n, r)
    if r == 0:
        return Certified(d.support_size(), 0.0)
    return _dispatch(d, "tail", n, r)


def exact_EK_tail(d: Distribution, n: int, r: int) -> float:
    """E of the number of letters seen at least r times."""
    return exact_EK_tail_certified(d, n, r).value


def km_transfer(em_value: float, n: int, r: int) -> float:
    """E K_{n+1,r+1} from E M_{n,r}."""
    _check(n, r)
    return em_value * (1.0 + n) / (1.0 + r)


def mk_transfer(ek_value: float, n: int, r: int) -> float:
    """E M_{n,r} from E K_{n+1,r+1}."""
    _check(n, r)
    return ek_value * (1.0 + r) / (1.0 + n)


def asymptotic_reference(alpha: float, ell_at: float, scale: float, r: int, kind: str) -> float:
    """First-order asymptotics under regular variation with index alpha."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if r < 0:
        raise ValueError("r must be >= 0")
    if kind == "counts":
        if r == 0:
            raise ValueError("counts need r >= 1")
        return alpha * math.gamma(r - alpha) / math.factorial(r) * scale ** alpha * ell_at
    if kind in ("probabilities", "poisson_probabilities"):
        return alpha * math.gamma(1 + r - alpha) / math.factorial(r) * scale ** (alpha - 1.0) * ell_at
    raise ValueError(f"unknown kind {kind!r}")


@dataclass
class OccupancyProfile:
    n: int
    values: dict = field(default_factory=dict)  # r -> (EM, EK)
    truncation_error: float = 0.0
    normalization: float | None = None

    def em(self) -> list:
        return [self.values[r][0] for r in sorted(self.values)]

    def ek(self) -> list:
        return [self.values[r][1] for r in sorted(self.values)]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "EM": self.em(),
            "EK": [v if math.isfinite(v) else "inf" for v in self.ek()],
            "truncation_error": self.truncation_error,
            "normalization": self.normalization,
        }


def occupancy_profile(d: Distribution, n: int, r_max: int | None = None) -> OccupancyProfile:
    if r_max is None:
        r_max = min(n, 20)
    _check(n, r_max)
    prof = OccupancyProfile(n)
    err = 0.0
    for r in range(r_max + 1):
        em = exact_EM_certified(d, n, r)
        ek = exact_EK_certified(d, n, r)
        prof.values[r] = (em.value, ek.value)
        err += em.certificate
    prof.truncation_error = err
    if r_max == n:
        prof.normalization = math.fsum(v[0] for v in prof.values.values())
    return prof
