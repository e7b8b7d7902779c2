"""Special functions and closed-form kernel integrals.

Everything here works on plain floats; the ``*_array`` variants accept numpy
arrays and iterate the continued fractions in lockstep, which is what the
bound optimizers use when they need thousands of kernel values at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import gammaln

_EPS = 1e-16
_FPMIN = 1e-300
_MAXIT = 100_000

# B_{2j} / (2j)! for j = 1..7, used by the Euler-Maclaurin tail of zeta.
_BERNOULLI_RATIOS = (
    1.0 / 6.0 / 2.0,
    -1.0 / 30.0 / 24.0,
    1.0 / 42.0 / 720.0,
    -1.0 / 30.0 / 40320.0,
    5.0 / 66.0 / 3628800.0,
    -691.0 / 2730.0 / 479001600.0,
    7.0 / 6.0 / 87178291200.0,
)


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


class UnsupportedFormError(ValueError):
    """Slowly varying function of a form we cannot integrate."""


def log_binom(n: float, r: float) -> float:
    """log C(n, r) through log-gamma, safe for n up to 1e7 and beyond."""
    if r < 0 or r > n:
        return -math.inf
    if r == 0 or r == n:
        return 0.0
    # -log(n+1) - log B(r+1, n-r+1); three lgammas of size n would leave an
    # absolute error of ulp(n log n)
    return -math.log1p(n) - float(log_beta_array(r + 1.0, n - r + 1.0))


def binom(n: float, r: float) -> float:
    return math.exp(log_binom(n, r))


# ---------------------------------------------------------------------------
# binomial and Poisson point masses (saddle-point form)
# ---------------------------------------------------------------------------

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def stirlerr_array(n) -> np.ndarray:
    """log(n!) - (n + 1/2) log n + n - log sqrt(2 pi), the Stirling remainder."""
    n = np.asarray(n, dtype=float)
    out = np.empty(n.shape)
    big = n > 15
    nb = n[big]
    inv2 = 1.0 / (nb * nb)
    out[big] = (1.0 / 12 - inv2 * (1.0 / 360 - inv2 * (1.0 / 1260 - inv2 * (1.0 / 1680 - inv2 / 1188)))) / nb
    for i in np.flatnonzero(~big.ravel()):
        v = float(n.ravel()[i])
        if v <= 0:
            out.ravel()[i] = 0.0
        else:
            out.ravel()[i] = math.lgamma(v + 1.0) - (v + 0.5) * math.log(v) + v - _LOG_SQRT_2PI
    return out


def bd0_array(x, m) -> np.ndarray:
    """x log(x/m) + m - x without cancellation when x is close to m."""
    x, m = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(m, dtype=float))
    out = np.empty(x.shape)
    near = np.abs(x - m) < 0.5 * (x + m)
    far = ~near
    with np.errstate(divide="ignore", invalid="ignore"):
        xf, mf = x[far], m[far]
        vals = np.where(xf > 0, xf * np.log(xf / mf), 0.0) + mf - xf
    out[far] = vals
    if near.any():
        xn, mn = x[near], m[near]
        v = (xn - mn) / (xn + mn)
        acc = (xn - mn) * v
        ej = 2.0 * xn * v
        v2 = v * v
        for j in range(1, 200):
            ej = ej * v2
            nxt = acc + ej / (2 * j + 1)
            done = np.all(nxt == acc)
            acc = nxt
            if done:
                break
        out[near] = acc
    return out


def log_binom_pmf_array(n: int, k: int, p) -> np.ndarray:
    """log P(Bin(n, p) = k), accurate near the mode even for n ~ 1e7."""
    p = np.asarray(p, dtype=float)
    q = 1.0 - p
    if k == 0:
        with np.errstate(divide="ignore"):
            return n * np.log1p(-p)
    if k == n:
        with np.errstate(divide="ignore"):
            return n * np.log(p)
    out = np.full(p.shape, -math.inf)
    ok = (p > 0) & (q > 0)
    pk, qk = p[ok], q[ok]
    out[ok] = (float(stirlerr_array(n) - stirlerr_array(k) - stirlerr_array(n - k))
               - bd0_array(k, n * pk) - bd0_array(n - k, n * qk)
               + 0.5 * math.log(n / (k * (n - k))) - _LOG_SQRT_2PI)
    return out


def log_poisson_pmf_array(k: int, mu) -> np.ndarray:
    """log P(Poisson(mu) = k) in the same saddle-point form."""
    mu = np.asarray(mu, dtype=float)
    if k == 0:
        return -mu
    with np.errstate(divide="ignore"):
        return (-float(stirlerr_array(k)) - bd0_array(k, mu) - 0.5 * math.log(k) - _LOG_SQRT_2PI
                + np.where(mu > 0, 0.0, -math.inf))


# ---------------------------------------------------------------------------
# lower incomplete gamma
# ---------------------------------------------------------------------------

def _gamma_series(t: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Sum_{k>=0} x^k / (t (t+1) ... (t+k)); converges fast for x < t + 1."""
    term = 1.0 / t
    total = term.copy()
    ap = t.copy()
    active = np.ones_like(t, dtype=bool)
    for _ in range(_MAXIT):
        ap = ap + 1.0
        term = np.where(active, term * x / ap, 0.0)
        total = total + term
        active &= np.abs(term) > np.abs(total) * _EPS
        if not active.any():
            break
    return total


def _gamma_cf(t: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Modified Lentz evaluation of the continued fraction for Gamma(t, x)."""
    b = x + 1.0 - t
    c = np.full_like(x, 1.0 / _FPMIN)
    d = 1.0 / np.where(np.abs(b) < _FPMIN, _FPMIN, b)
    h = d.copy()
    active = np.ones_like(x, dtype=bool)
    for i in range(1, _MAXIT):
        an = -i * (i - t)
        b = b + 2.0
        d = an * d + b
        d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
        c = b + an / c
        c = np.where(np.abs(c) < _FPMIN, _FPMIN, c)
        d = 1.0 / d
        delta = np.where(active, d * c, 1.0)
        h = h * delta
        active &= np.abs(delta - 1.0) > _EPS
        if not active.any():
            break
    return h


def lower_incomplete_gamma_array(t, x) -> np.ndarray:
    """Vectorised gamma(t, x) = int_0^x u^(t-1) e^(-u) du."""
    t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
    t = t.astype(float).copy()
    x = x.astype(float).copy()
    if np.any(t < 0):
        raise DomainError("lower incomplete gamma needs t >= 0")
    if np.any(x < 0):
        raise DomainError("lower incomplete gamma needs x >= 0")
    out = np.zeros(t.shape, dtype=float)

    zero_t = t == 0
    out[zero_t & (x > 0)] = math.inf
    inf_x = np.isinf(x) & ~zero_t
    out[inf_x] = np.exp(gammaln(t[inf_x]))

    rest = ~zero_t & ~np.isinf(x) & (x > 0)
    series = rest & (x < t + 1.0)
    if series.any():
        ts, xs = t[series], x[series]
        out[series] = np.exp(ts * np.log(xs) - xs) * _gamma_series(ts, xs)
    cf = rest & ~series
    if cf.any():
        tc, xc = t[cf], x[cf]
        upper = np.exp(tc * np.log(xc) - xc) * _gamma_cf(tc, xc)
        out[cf] = np.exp(gammaln(tc)) - upper
    return out


def lower_incomplete_gamma(t: float, x: float) -> float:
    """gamma(t, x); +inf when t = 0 and x > 0, Gamma(t) when x is infinite."""
    if t < 0:
        raise DomainError(f"lower incomplete gamma needs t >= 0, got {t}")
    if x < 0:
        raise DomainError(f"lower incomplete gamma needs x >= 0, got {x}")
    return float(lower_incomplete_gamma_array(t, x))


# ---------------------------------------------------------------------------
# incomplete beta
# ---------------------------------------------------------------------------

def _beta_cf(a: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Continued fraction for I_x(a, b) (modified Lentz, all lanes at once)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d = 1.0 / np.where(np.abs(d) < _FPMIN, _FPMIN, d)
    h = d.copy()
    active = np.ones_like(x, dtype=bool)
    for m in range(1, _MAXIT):
        m2 = 2.0 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / np.where(np.abs(d) < _FPMIN, _FPMIN, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _FPMIN, _FPMIN, c)
        h = np.where(active, h * d * c, h)
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / np.where(np.abs(d) < _FPMIN, _FPMIN, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _FPMIN, _FPMIN, c)
        delta = d * c
        h = np.where(active, h * delta, h)
        active &= np.abs(delta - 1.0) > _EPS
        if not active.any():
            break
    return h


def _stirling_correction(x: np.ndarray) -> np.ndarray:
    """lgamma(x) minus its Stirling main part, for x >= 10."""
    x2 = x * x
    return (1.0 / 12.0 - (1.0 / 360.0 - (1.0 / 1260.0 - (1.0 / 1680.0 - 1.0 / (1188.0 * x2)) / x2) / x2) / x2) / x


def log_beta_array(a, b) -> np.ndarray:
    """log B(a, b) without the cancellation of three large log-gammas."""
    a, b = (np.asarray(v, dtype=float) for v in np.broadcast_arrays(a, b))
    small, big = np.minimum(a, b), np.maximum(a, b)
    out = np.empty(small.shape)
    plain = big < 10.0
    out[plain] = gammaln(small[plain]) + gammaln(big[plain]) - gammaln(small[plain] + big[plain])
    one_big = ~plain & (small < 10.0)
    if one_big.any():
        s, g = small[one_big], big[one_big]
        diff = (-(g - 0.5) * np.log1p(s / g) - s * np.log(s + g) + s
                + _stirling_correction(g) - _stirling_correction(s + g))
        out[one_big] = gammaln(s) + diff
    both = ~plain & ~one_big
    if both.any():
        s, g = small[both], big[both]
        out[both] = (0.5 * math.log(2.0 * math.pi) - 0.5 * np.log(s + g)
                     - (s - 0.5) * np.log1p(g / s) - (g - 0.5) * np.log1p(s / g)
                     + _stirling_correction(s) + _stirling_correction(g)
                     - _stirling_correction(s + g))
    return out


def _beta_pieces(a, b, x):
    """Return (head, tail, small_side_is_head) where head = int_0^x and
    tail = int_x^1 of v^(a-1) (1-v)^(b-1); the side computed directly by the
    continued fraction is the accurate one."""
    a, b, x = (np.asarray(v, dtype=float) for v in np.broadcast_arrays(a, b, x))
    full = np.exp(log_beta_array(a, b))
    head = np.zeros(x.shape)
    tail = np.zeros(x.shape)

    lo = (x > 0) & (x < (a + 1.0) / (a + b + 2.0))
    hi = (x < 1) & ~lo & (x > 0)
    if lo.any():
        al, bl, xl = a[lo], b[lo], x[lo]
        front = np.exp(al * np.log(xl) + bl * np.log1p(-xl))
        head[lo] = front * _beta_cf(al, bl, xl) / al
        tail[lo] = full[lo] - head[lo]
    if hi.any():
        ah, bh, xh = a[hi], b[hi], x[hi]
        front = np.exp(ah * np.log(xh) + bh * np.log1p(-xh))
        tail[hi] = front * _beta_cf(bh, ah, 1.0 - xh) / bh
        head[hi] = full[hi] - tail[hi]
    one = x >= 1
    head[one] = full[one]
    zero = x <= 0
    tail[zero] = full[zero]
    return head, tail, ~hi & ~one


def _log1pmx(t: np.ndarray) -> np.ndarray:
    """log(1 + t) - t, accurate for small |t|."""
    t = np.asarray(t, dtype=float)
    out = np.log1p(t) - t
    small = np.abs(t) < 0.3
    if small.any():
        ts = t[small]
        acc = np.zeros_like(ts)
        power = ts * ts
        for k in range(2, 60):
            acc += (1.0 if k % 2 else -1.0) * power / k
            power = power * ts
        out[small] = acc
    return out


def _split(v):
    c = 134217729.0 * v
    hi = c - (c - v)
    return hi, v - hi


def _two_prod(u, v):
    p = u * v
    uh, ul = _split(u)
    vh, vl = _split(v)
    return p, ((uh * vh - p) + uh * vl + ul * vh) + ul * vl


def _dd_diff_of_products(x, b, a):
    """x*b - (1-x)*a with only the final rounding."""
    s = 1.0 - x
    s_err = (1.0 - s) - x
    p1, e1 = _two_prod(x, b)
    p2, e2 = _two_prod(s, a)
    return (p1 - p2) + (e1 - e2 - s_err * a)


def _log_beta_density_front(a, b, x):
    """log(x^a (1-x)^b / B(a, b)).  When a and b are both large the naive
    expression loses digits to cancellation, so expand around x0 = a/(a+b)."""
    naive = a * np.log(x) + b * np.log1p(-x) - log_beta_array(a, b)
    big = (a >= 10.0) & (b >= 10.0)
    if not big.any():
        return naive
    ab, bb, xb = a[big], b[big], x[big]
    total = ab + bb
    # (x - x0)(a + b) = x b - (1 - x) a, in double-double
    num = _dd_diff_of_products(xb, bb, ab)
    ta, tb = num / ab, -num / bb
    ga, gb = _log1pmx(ta), _log1pmx(tb)
    # near t = -1 take log(1 + t) from x directly
    fa = ta < -0.5
    ga[fa] = np.log(xb[fa]) + np.log(total[fa] / ab[fa]) - ta[fa]
    fb = tb < -0.5
    gb[fb] = np.log1p(-xb[fb]) + np.log(total[fb] / bb[fb]) - tb[fb]
    core = ab * ga + bb * gb
    out = naive.copy()
    out[big] = (core + 0.5 * np.log(ab * bb / (2.0 * math.pi * total))
                - _stirling_correction(ab) - _stirling_correction(bb)
                + _stirling_correction(total))
    return out


def regularized_incomplete_beta_array(a, b, x) -> np.ndarray:
    a, b, x = (np.asarray(v, dtype=float) for v in np.broadcast_arrays(a, b, x))
    if np.any((x < 0) | (x > 1)):
        raise DomainError("incomplete beta needs 0 <= x <= 1")
    if np.any((a <= 0) | (b <= 0)):
        raise DomainError("incomplete beta needs a, b > 0")
    out = np.where(x >= 1, 1.0, 0.0)
    lo = (x > 0) & (x < (a + 1.0) / (a + b + 2.0))
    hi = (x < 1) & ~lo & (x > 0)
    if lo.any():
        al, bl, xl = a[lo], b[lo], x[lo]
        front = np.exp(_log_beta_density_front(al, bl, xl))
        out[lo] = front * _beta_cf(al, bl, xl) / al
    if hi.any():
        ah, bh, xh = a[hi], b[hi], x[hi]
        front = np.exp(_log_beta_density_front(bh, ah, 1.0 - xh))
        out[hi] = 1.0 - front * _beta_cf(bh, ah, 1.0 - xh) / bh
        # the complement cancels when the answer is small: go direct
        redo = np.zeros_like(hi)
        redo[hi] = out[hi] < 0.25
        if redo.any():
            ar, br, xr = a[redo], b[redo], x[redo]
            front = np.exp(_log_beta_density_front(ar, br, xr))
            out[redo] = front * _beta_cf(ar, br, xr) / ar
    return out


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) by continued fraction, with the usual symmetry switch."""
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"incomplete beta needs 0 <= x <= 1, got {x}")
    if a <= 0 or b <= 0:
        raise DomainError("incomplete beta needs a, b > 0")
    return float(regularized_incomplete_beta_array(a, b, x))


def _beta_interval(a, b, lo, hi):
    """int_lo^hi v^(a-1)(1-v)^(b-1) dv, choosing the subtraction that keeps
    relative accuracy (both ends past the mode -> difference of tails)."""
    h_lo, t_lo, s_lo = _beta_pieces(a, b, lo)
    h_hi, t_hi, s_hi = _beta_pieces(a, b, hi)
    both_tail = ~s_lo & ~s_hi
    return np.where(both_tail, t_lo - t_hi, h_hi - h_lo)


def kernel_integral_array(r, m, c, a, b) -> np.ndarray:
    """Vectorised int_a^b u^r (1 - c u)^m du for real r > -1, m >= 0."""
    r, m, c, a, b = (np.asarray(v, dtype=float) for v in np.broadcast_arrays(r, m, c, a, b))
    if np.any(c * b > 1.0 + 1e-15):
        raise DomainError("kernel integral needs c*b <= 1")
    if np.any(a > b) or np.any(a < 0):
        raise DomainError("kernel integral needs 0 <= a <= b")
    lo = np.clip(c * a, 0.0, 1.0)
    hi = np.clip(c * b, 0.0, 1.0)
    val = _beta_interval(r + 1.0, m + 1.0, lo, hi)
    val = np.maximum(val, 0.0)
    return val * np.exp(-(r + 1.0) * np.log(c))


def kernel_integral(r: float, m: float, c: float, a: float, b: float) -> float:
    """int_a^b u^r (1 - c u)^m du via the substitution v = c u."""
    if c * b > 1.0 + 1e-15:
        raise DomainError(f"kernel integral needs c*b <= 1, got {c * b}")
    if not 0.0 <= a <= b:
        raise DomainError("kernel integral needs 0 <= a <= b")
    if a == b:
        return 0.0
    return float(kernel_integral_array(r, m, c, a, b))


# ---------------------------------------------------------------------------
# zeta
# ---------------------------------------------------------------------------

def hurwitz_zeta(s: float, q: float) -> float:
    """sum_{k>=0} (q + k)^(-s) for s > 1, q > 0, via Euler-Maclaurin."""
    if s <= 1:
        raise DomainError(f"zeta needs s > 1, got {s}")
    if q <= 0:
        raise DomainError("hurwitz zeta needs q > 0")
    n_direct = 12
    head = math.fsum((q + k) ** (-s) for k in range(n_direct))
    a = q + n_direct
    tail = a ** (1.0 - s) / (s - 1.0) + 0.5 * a ** (-s)
    rising = s
    power = a ** (-s - 1.0)
    for j, coeff in enumerate(_BERNOULLI_RATIOS):
        tail += coeff * rising * power
        rising *= (s + 2 * j + 1) * (s + 2 * j + 2)
        power /= a * a
    return head + tail


def riemann_zeta(s: float) -> float:
    if s <= 1:
        raise DomainError(f"zeta needs s > 1, got {s}")
    return hurwitz_zeta(s, 1.0)


# ---------------------------------------------------------------------------
# slowly varying functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SlowlyVarying:
    """ell(x) = scale for ``constant``; scale * log(e + x)**power for ``log_power``."""

    kind: str
    scale: float
    power: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "log_power"):
            raise UnsupportedFormError(f"unsupported slowly varying form {self.kind!r}")
        if self.scale <= 0:
            raise ValueError("slowly varying scale must be positive")

    def __call__(self, x):
        if self.kind == "constant":
            return self.scale * np.ones_like(np.asarray(x, dtype=float)) if np.ndim(x) else self.scale
        return self.scale * np.log(math.e + np.asarray(x, dtype=float)) ** self.power

    @property
    def non_increasing(self) -> bool:
        return self.kind == "constant" or self.power <= 0

    @property
    def non_decreasing(self) -> bool:
        return self.kind == "constant" or self.power >= 0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "scale": self.scale, "power": self.power}


def constant_ell(value: float) -> SlowlyVarying:
    return SlowlyVarying("constant", float(value))


def ell_circ_beta(ell: SlowlyVarying, beta: float, x: float) -> float:
    """sqrt(int_{2x}^inf ell(u)^2 u^(beta-2) du)."""
    if not isinstance(ell, SlowlyVarying):
        raise UnsupportedFormError("ell must be a SlowlyVarying instance")
    if not 0.0 < beta < 1.0:
        raise DomainError("beta must lie in (0, 1)")
    if x < 1:
        raise DomainError("ell_circ_beta needs x >= 1")
    if ell.kind == "constant":
        return ell.scale * (2.0 * x) ** (-(1.0 - beta) / 2.0) / math.sqrt(1.0 - beta)
    # v = u^(beta-1) maps [2x, inf) onto (0, (2x)^(beta-1)] with u^(beta-2) du = dv/(1-beta);
    # the remaining integrand only has a logarithmic singularity at v = 0.
    top = (2.0 * x) ** (beta - 1.0)
    expo = -1.0 / (1.0 - beta)

    def integrand(v):
        return math.log(math.e + v ** expo) ** (2.0 * ell.power)

    val, _ = integrate.quad(integrand, 0.0, top, epsabs=0.0, epsrel=1e-12, limit=200)
    return ell.scale * math.sqrt(val / (1.0 - beta))
