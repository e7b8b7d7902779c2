"""Occupancy when the sample size is a Poisson count with mean Lambda.

E M_r = Lambda^r/r! sum_a p_a^(1+r) e^(-Lambda p_a).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bounds import AtomSum, BoundResult, Condition, _inapplicable, minimize_count_plus
from .dist import Distribution, NoEnvelopeError, RVEnvelope, rv_envelope
from .estimate import SampleSummary
from .exact import ABS_TOL, REL_TOL, Certified, PrecisionError
from .dist import HORIZON_CAP
from .numerics import log_poisson_pmf_array, lower_incomplete_gamma, lower_incomplete_gamma_array
from .simulate import SeedSpec, draw, summarize


@dataclass(frozen=True)
class IntensityFn:
    """lambda(u) = rate (constant) or a u^b (power, b > -1)."""

    form: str
    rate: float = 1.0
    a: float = 1.0
    b: float = 0.0

    def __post_init__(self):
        if self.form == "constant":
            if not self.rate >= 0:
                raise ValueError("rate must be >= 0")
        elif self.form == "power":
            if not (self.a >= 0 and self.b > -1):
                raise ValueError("power intensity needs a >= 0 and b > -1")
        else:
            raise ValueError(f"unknown intensity form {self.form!r}")

    @classmethod
    def from_config(cls, cfg: dict) -> "IntensityFn":
        cfg = dict(cfg)
        form = cfg.pop("form", None)
        if form == "constant":
            out = cls("constant", rate=float(cfg.pop("lambda")))
        elif form == "power":
            out = cls("power", a=float(cfg.pop("a")), b=float(cfg.pop("b")))
        else:
            raise ValueError(f"unknown intensity form {form!r}")
        if cfg:
            raise ValueError(f"unexpected keys {sorted(cfg)}")
        return out

    def __call__(self, u: float) -> float:
        if self.form == "constant":
            return self.rate
        if u == 0 and self.b < 0:
            return math.inf if self.a > 0 else 0.0
        return self.a * u ** self.b

    def Lambda(self, t: float) -> float:
        """Cumulative intensity int_0^t lambda(u) du."""
        if t < 0:
            raise ValueError("t must be >= 0")
        if self.form == "constant":
            return self.rate * t
        return self.a * t ** (self.b + 1.0) / (self.b + 1.0)


def c_bar(r: int) -> float:
    """(1+r)^(1+r) / (r! e^(1+r))."""
    return math.exp((1 + r) * math.log(1.0 + r) - math.lgamma(r + 1.0) - (1.0 + r))


# ---------------------------------------------------------------------------
# exact expectation
# ---------------------------------------------------------------------------

def _log_terms(p, lam, r):
    """log(lam^r/r! p^(1+r) e^(-lam p)) = log p + log P(Poisson(lam p) = r)."""
    p = np.asarray(p, dtype=float)
    return np.log(p) + log_poisson_pmf_array(r, lam * p)


def _zipf_poisson(d: Distribution, lam: float, r: int) -> Certified:
    """Head sum plus a convexity bracket on the tail, as for fixed n."""
    al, z = d.alpha, d.zeta
    s = 1.0 / al
    a = r + 1.0
    # h(p(x)) is convex in x once lam p <= 0.04 a/(s+1)
    k = max(10, d.nu(0.04 * a / ((s + 1.0) * lam)) + 1)
    log_front = r * math.log(lam) - math.lgamma(r + 1.0)
    pref = al * z ** (-al) * math.exp(log_front) * lam ** (-(a - al))

    def G(x):
        return pref * lower_incomplete_gamma(a - al, lam * x ** (-s) / z)

    while True:
        ps = d.mass(np.arange(1, k + 1, dtype=float))
        head = math.fsum(np.exp(_log_terms(ps, lam, r)))
        h_next = math.exp(float(_log_terms(np.array([d.mass(k + 1.0)]), lam, r)[0]))
        lo = G(k + 1.0) + 0.5 * h_next
        hi = G(k + 0.5)
        lo, hi = min(lo, hi), max(lo, hi)
        value = head + 0.5 * (lo + hi)
        cert = 0.5 * (hi - lo) + 4e-16 * abs(value)
        if cert <= max(REL_TOL * abs(value), ABS_TOL):
            return Certified(value, cert)
        if k >= HORIZON_CAP:
            raise PrecisionError(f"zipf tail certificate {cert:.3g} at horizon cap", cert)
        k = min(HORIZON_CAP, 4 * k)


def exact_EM_poisson_certified(d: Distribution, lam: float, r: int) -> Certified:
    if not lam > 0:
        raise ValueError("Lambda must be positive")
    if r < 0 or int(r) != r:
        raise ValueError("r must be a non-negative integer")
    if d.is_finite:
        vals, mult = d.distinct_atoms()
        return Certified(math.fsum(np.exp(_log_terms(vals, lam, r)) * mult), 0.0)
    if d.family == "zipf":
        return _zipf_poisson(d, lam, r)
    # geometric: tail terms are at most Lambda^r/r! p_K^r p
    k = max(16, d.nu(min(1.0, (r + 1.0) / lam)) + 16)
    k_cap = max(1, d.nu(1e-300))
    while True:
        k = min(k, k_cap)
        ps = d.mass(np.arange(1, k + 1, dtype=float))
        value = math.fsum(np.exp(_log_terms(ps, lam, r)))
        cert = math.exp(r * math.log(lam) - math.lgamma(r + 1.0) + r * math.log(ps[-1])) * d.tail_mass(k)
        if cert <= max(REL_TOL * abs(value), ABS_TOL):
            return Certified(value, cert)
        if k >= k_cap:
            raise PrecisionError("geometric tail certificate not reached", cert)
        k *= 2


def exact_EM_poisson(d: Distribution, lam: float, r: int) -> float:
    return exact_EM_poisson_certified(d, lam, r).value


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------

def _gamma_tail(d: Distribution, lam: float, r: int):
    """Upper bound on sum_{k>t} J(2 p_k), J(y) = int_0^y u^r e^(-lam u/2) du."""

    def tail(t):
        t = np.asarray(t, dtype=float)
        if d.family == "zipf":
            # J(2 p(x)) decreases in x, so the sum is below the integral from t
            al, z = d.alpha, d.zeta
            y = 2.0 * t ** (-1.0 / al) / z
            sc = (2.0 / lam)
            lead = (z / 2.0) ** (-al) * sc ** (r + 1 - al) * lower_incomplete_gamma_array(r + 1 - al, lam * y / 2.0)
            sub = t * sc ** (r + 1) * lower_incomplete_gamma_array(r + 1.0, lam * y / 2.0)
            return np.maximum(lead - sub, 0.0)
        q = d.q
        return (2.0 * (1.0 - q)) ** (r + 1) / (r + 1) * q ** (t * (r + 1)) / (1.0 - q ** (r + 1))

    return tail


class PsiPoisson:
    """(2^(1+r) Lambda^r / r!) int_0^eps nu(u/2) u^r e^(-Lambda u/2) du."""

    def __init__(self, d: Distribution, lam: float, r: int):
        self.pref = math.exp((1 + r) * math.log(2.0) + r * math.log(lam) - math.lgamma(r + 1.0))
        sc = (2.0 / lam) ** (r + 1)
        j = lambda y: sc * lower_incomplete_gamma_array(r + 1.0, lam * np.asarray(y, dtype=float) / 2.0)  # noqa: E731
        k = 0
        if not d.is_finite:
            k = d.nu((r + 1.0) / (100.0 * lam)) if d.family == "zipf" else d.nu(1e-40)
            k = max(k, 4096)
        self.sum = AtomSum(d, j, 2.0, _gamma_tail(d, lam, r), k)

    def __call__(self, eps) -> np.ndarray:
        eps = np.atleast_1d(np.asarray(eps, dtype=float))
        out = self.pref * self.sum(eps)
        out[eps <= 0] = 0.0
        return out


def adaptt_objective(d: Distribution, lam: float, r: int, eps) -> np.ndarray:
    eps = np.atleast_1d(np.asarray(eps, dtype=float))
    nu = np.array([d.support_size() if e <= 0 else d.nu(float(e)) for e in eps])
    return c_bar(r) * nu / lam + PsiPoisson(d, lam, r)(eps)


def upper_poisson(d: Distribution, lam: float, r: int, variant: str = "adaptt",
                  envelope: Optional[RVEnvelope] = None) -> BoundResult:
    if not lam > 0:
        raise ValueError("Lambda must be positive")
    if r < 0:
        raise ValueError("r must be >= 0")
    source = f"poisson_{variant}"
    if variant == "adaptt":
        best, eps, capped = minimize_count_plus(d, c_bar(r) / lam, PsiPoisson(d, lam, r))
        notes = ["candidate cap reached"] if capped else []
        return BoundResult(source, "upper", best, eps, True, [Condition("Lambda > 0", True)], notes)
    if variant != "boundpoiss":
        raise ValueError("variant must be adaptt or boundpoiss")
    conds = [Condition("Lambda >= 1", lam >= 1.0)]
    try:
        env = envelope if envelope is not None else rv_envelope(d, "upper")
        if envelope is not None:
            env.verify(d)
    except (NoEnvelopeError, ValueError) as exc:
        conds.append(Condition("upper envelope", False, str(exc)))
        return _inapplicable(source, "upper", conds)
    conds.append(Condition("upper envelope on (0,1]", env.valid_from_epsilon >= 1.0,
                           f"alpha={env.alpha:g}, ell={env.ell.kind}"))
    conds.append(Condition("ell non-increasing", env.ell.non_increasing))
    if not all(c.holds for c in conds):
        return _inapplicable(source, "upper", conds)
    al = env.alpha
    if 1.0 + r - al <= 0:
        return BoundResult(source, "upper", math.inf, 1.0 / lam, True, conds,
                           ["gamma(0, 1/2) is infinite: bound is trivial"])
    const = c_bar(r) + 4.0 ** (1 + r) * lower_incomplete_gamma(1.0 + r - al, 0.5) / math.factorial(r)
    val = const * lam ** (al - 1.0) * float(env.ell(lam))
    return BoundResult(source, "upper", val, 1.0 / lam, True, conds)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def sample_poissonized(d: Distribution, intensity: IntensityFn, t: float, seed: SeedSpec,
                       replicate: int) -> SampleSummary:
    """n_t ~ Poisson(Lambda_t), then n_t i.i.d. draws, all from one replicate stream."""
    lam = intensity.Lambda(t)
    if not math.isfinite(lam):
        raise ValueError("Lambda_t must be finite")
    rng = seed.rng(replicate, stream=1)
    n = int(rng.poisson(lam))
    if n == 0:
        return SampleSummary(0, (), ())
    return summarize(draw(d, n, rng))
