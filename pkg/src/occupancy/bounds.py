"""Finite-sample bounds on E M_{n,r}.

Every bound is a function of the counting function nu.  The optimisations
over eps are exact: the objectives are piecewise monotone between atoms, so
only right limits (infima) or right endpoints (suprema) at atoms need to be
checked.  Integrals of nu against u^r (1 - c u)^m are sums of closed-form
kernel integrals over the segments where nu and kappa are constant.

For infinite laws the part of an integral that lies below the explicit atom
list is bounded in the safe direction: upper bounds add a certified
over-estimate, lower bounds drop it.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dist import Distribution, NoEnvelopeError, RVEnvelope, rv_envelope
from .exact import exact_EM_certified
from .numerics import (
    ell_circ_beta,
    kernel_integral_array,
    log_binom,
    lower_incomplete_gamma,
)

SLACK = 1e-10
_CAND_CAP = 2_000_000


@dataclass(frozen=True)
class Condition:
    name: str
    holds: bool
    detail: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "holds": self.holds, "detail": self.detail}


@dataclass
class BoundResult:
    source: str
    side: str  # "upper" or "lower"
    value: float
    optimizer_eps: Optional[float] = None
    applicable: bool = True
    conditions: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        v = self.value
        return {
            "source": self.source,
            "side": self.side,
            "value": v if math.isfinite(v) else ("inf" if v > 0 else "-inf"),
            "optimizer_eps": self.optimizer_eps,
            "applicable": self.applicable,
            "conditions": [c.to_dict() for c in self.conditions],
            "notes": list(self.notes),
        }


def _inapplicable(source: str, side: str, conditions, notes=()) -> BoundResult:
    return BoundResult(source, side, math.inf if side == "upper" else 0.0, None, False,
                       list(conditions), list(notes))


def c_r(r: int) -> float:
    """c(r): 1/e for r = 0, e(1+r)/sqrt(pi) otherwise."""
    if r < 0:
        raise ValueError("r must be >= 0")
    return math.exp(-1.0) if r == 0 else math.e * (1.0 + r) / math.sqrt(math.pi)


def c1(alpha: float, r: int) -> float:
    g = lower_incomplete_gamma(1.0 + r - alpha, 0.5)
    return c_r(r) + 4.0 ** (1 + r) / math.factorial(r) * (1.0 + r) ** (1 + r - alpha) * g


def c2(alpha: float, beta: float, r: int) -> float:
    g = lower_incomplete_gamma(1.0 + beta + 2.0 * (r - alpha), 1.0)
    return (4.0 ** (1 + r) / math.factorial(r)
            * ((1.0 + r) / 2.0) ** ((1.0 + beta) / 2.0 + r - alpha) * math.sqrt(g))


def _check_nr(n: int, r: int) -> None:
    if n < 1 or int(n) != n:
        raise ValueError("n must be a positive integer")
    if r < 0 or r > n or int(r) != r:
        raise ValueError("need 0 <= r <= n")


# ---------------------------------------------------------------------------
# kernel sums over atoms
# ---------------------------------------------------------------------------

def _kernel_tail(d: Distribution, t, r: int, m: int, c: float, mult: float):
    """Upper bound on sum_{k>t} int_0^{mult p_k} u^r (1 - c u)^m du (t >= 1)."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr < 1):
        raise ValueError("tail needs t >= 1")
    if d.family == "zipf":
        al, z = d.alpha, d.zeta
        # x -> J(mult p(x)) is decreasing, and convex once the factor
        # p^(r+1)(1 - c mult p)^m is increasing in p; then the midpoint rule
        # over-estimates the sum, otherwise the integral from t does
        p_mid = (t_arr + 0.5) ** (-1.0 / al) / z
        x = np.where(c * mult * p_mid * (m + r + 1) <= r + 1, t_arr + 0.5, t_arr)
        y = mult * x ** (-1.0 / al) / z
        lead = z ** (-al) * mult ** al * kernel_integral_array(r - al, m, c, 0.0, y)
        sub = x * kernel_integral_array(r, m, c, 0.0, y)
        out = np.maximum(lead - sub, 0.0)
    else:
        # geometric: J(y) <= y^(r+1)/(r+1)
        q = d.q
        out = (mult * (1.0 - q)) ** (r + 1) / (r + 1) * q ** (t_arr * (r + 1)) / (1.0 - q ** (r + 1))
    return out if np.ndim(t) else float(out[0])


class AtomSum:
    """S(eps) = sum_a J(min(eps, mult p_a)) for a non-decreasing J with J(0) = 0.

    `tail(t)` must bound sum_{k>t} J(mult p_k) from above (infinite laws);
    the first `k_explicit` atoms are summed outright."""

    def __init__(self, d: Distribution, j, mult: float, tail=None, k_explicit: int = 0):
        self.d, self.j, self.mult, self.tail_fn = d, j, mult, tail
        if d.is_finite:
            vals, counts = d.distinct_atoms()
            w = mult * vals[::-1]  # ascending
            cnt = counts[::-1].astype(float)
        else:
            k = min(max(k_explicit, 16), _CAND_CAP)
            self.k = k
            w = mult * d.mass(np.arange(k, 0, -1, dtype=float))  # ascending
            cnt = np.ones(k)
            self.tail = float(tail(np.array([float(k)]))[0])
        jw = j(w)
        self.w = w
        self.cum_j = np.concatenate([[0.0], np.cumsum(jw * cnt)])
        self.cum_n = np.concatenate([[0.0], np.cumsum(cnt)])

    def __call__(self, eps) -> np.ndarray:
        eps = np.atleast_1d(np.asarray(eps, dtype=float))
        j_eps = self.j(eps)
        idx = np.searchsorted(self.w, eps, side="left")  # w[:idx] < eps
        below = self.cum_j[idx]
        if self.d.is_finite:
            above = self.cum_n[-1] - self.cum_n[idx]
            return above * j_eps + below
        # atoms with mult p >= eps are counted in closed form
        pos = eps > 0
        above = np.zeros_like(eps)
        above[pos] = self.d.nu_array(eps[pos] / self.mult)
        k = self.k
        t = above.astype(np.int64)
        inner = t < k
        rest = np.empty_like(eps)
        rest[inner] = self.cum_j[k - t[inner]] + self.tail
        if (~inner).any():
            rest[~inner] = self.tail_fn(t[~inner].astype(float))
        return t * j_eps + rest


def _atom_kernel_sum(d: Distribution, n: int, r: int, c: float, mult: float) -> AtomSum:
    """S(eps) = sum_a int_0^{min(eps, mult p_a)} u^r (1 - c u)^m du, m = n - r."""
    m = n - r
    k = 0
    if not d.is_finite:
        if d.family == "zipf":
            # explicit atoms until the midpoint tail bound is valid
            conv = (r + 1.0) / (c * mult * (n + 1.0))
            k = max(4096, d.nu(0.5 * conv) + 1)
        else:
            k = d.nu(1e-40)
    return AtomSum(d, lambda y: kernel_integral_array(r, m, c, 0.0, y), mult,
                   lambda t: _kernel_tail(d, t, r, m, c, mult), k)


def minimize_count_plus(d: Distribution, lead: float, extra) -> tuple:
    """inf over eps in [0, 1] of lead * nu(eps) + extra(eps).

    extra must be continuous, non-decreasing and vanish at 0.  On each
    (p_{k+1}, p_k] nu is constant, so the infimum is a right limit at an atom,
    eps = 0 (finite laws) or eps = 1.  Returns (value, eps, capped)."""
    finite = d.is_finite
    best, best_eps = math.inf, None
    if finite:
        best, best_eps = lead * d.support_size(), 0.0
    v1 = lead * d.nu(1.0) + float(extra(np.array([1.0]))[0])
    if v1 < best:
        best, best_eps = v1, 1.0
    chunk, start = 64, 0
    total = len(d.distinct_atoms()[0]) if finite else _CAND_CAP
    capped = False
    while start < total:
        stop = min(total, start + chunk)
        vals, above = _desc_candidates(d, start, stop)
        keep = vals < 1.0
        if keep.any():
            sc = lead * above[keep] + extra(vals[keep])
            i = int(np.argmin(sc))
            if sc[i] < best:
                best, best_eps = float(sc[i]), float(vals[keep][i])
        # prune once the count term alone passes the incumbent
        if lead * above[-1] >= best:
            break
        start = stop
        chunk *= 2
    else:
        capped = not finite
    return best, best_eps, capped


# ---------------------------------------------------------------------------
# Theorem-type upper bound with psi
# ---------------------------------------------------------------------------

class PsiPlus:
    """psi+(eps) with general b > 1."""

    def __init__(self, d: Distribution, n: int, r: int, b: float = 2.0):
        if not b > 1:
            raise ValueError("b must exceed 1")
        self.pref = math.exp((1 + r) * math.log(b) - math.log(b - 1.0) + log_binom(n, r))
        self.sum = _atom_kernel_sum(d, n, r, 1.0 / b, b)

    def __call__(self, eps) -> np.ndarray:
        eps = np.atleast_1d(np.asarray(eps, dtype=float))
        out = self.pref * self.sum(eps)
        out[eps <= 0] = 0.0
        return out


def _nu_at(d: Distribution, eps: np.ndarray) -> np.ndarray:
    out = np.empty(len(eps))
    zero = eps <= 0
    out[zero] = d.support_size()
    if (~zero).any():
        out[~zero] = d.nu_array(eps[~zero])
    return out


def tg_objective(d: Distribution, n: int, r: int, eps, b: float = 2.0) -> np.ndarray:
    """phi+ + psi+ at arbitrary eps in [0, 1] (r <= n-1)."""
    eps = np.atleast_1d(np.asarray(eps, dtype=float))
    return c_r(r) * _nu_at(d, eps) / n + PsiPlus(d, n, r, b)(eps)


def _desc_candidates(d: Distribution, start: int, stop: int):
    """Distinct atoms start..stop-1 in descending order, with #{p > atom}."""
    if d.is_finite:
        vals, counts = d.distinct_atoms()
        above = np.concatenate([[0], np.cumsum(counts)[:-1]])
        return vals[start:stop], above[start:stop].astype(float)
    k = np.arange(start + 1, stop + 1, dtype=float)
    return d.mass(k), k - 1.0


def upper_tg(d: Distribution, n: int, r: int, b: float = 2.0) -> BoundResult:
    """inf over eps of phi+ + psi+ (r < n), or of p*^(n+1) nu + eps^n (r = n)."""
    _check_nr(n, r)
    conds = [Condition("0<=r<=n", True)]
    if r == n:
        best, eps, capped = minimize_count_plus(d, d.p_star ** (n + 1),
                                                lambda e: np.asarray(e, dtype=float) ** n)
    else:
        best, eps, capped = minimize_count_plus(d, c_r(r) / n, PsiPlus(d, n, r, b))
    notes = ["candidate cap reached"] if capped else []
    if eps is not None and 0 < eps < 1:
        notes.append("optimum approached as a right limit at optimizer_eps")
    return BoundResult("upper_tg", "upper", best, eps, True, conds, notes)


def upper_finite(d: Distribution, n: int, r: int) -> BoundResult:
    _check_nr(n, r)
    cond = Condition("finite support", d.is_finite)
    if not d.is_finite:
        return _inapplicable("upper_finite", "upper", [cond])
    s = d.support_size()
    if r == n:
        return BoundResult("upper_finite", "upper", d.p_star ** (n + 1) * s, 0.0, True, [cond])
    return BoundResult("upper_finite", "upper", c_r(r) * s / n, 0.0, True, [cond])


# ---------------------------------------------------------------------------
# regular-variation corollaries
# ---------------------------------------------------------------------------

def upper_rv(d: Distribution, n: int, r: int, variant: str = "ctg",
             beta: Optional[float] = None, envelope: Optional[RVEnvelope] = None) -> BoundResult:
    """Closed-form rate bounds from an upper envelope nu <= eps^-alpha ell(1/eps)."""
    if variant not in ("ctg", "ctg2", "ctg3"):
        raise ValueError("variant must be ctg, ctg2 or ctg3")
    source = f"upper_rv_{variant}"
    _check_nr(n, r)
    conds = [Condition("infinite support", not d.is_finite),
             Condition("n >= 2", n >= 2),
             Condition("r <= n-1", r <= n - 1)]
    if not all(c.holds for c in conds):
        return _inapplicable(source, "upper", conds)
    try:
        env = envelope if envelope is not None else rv_envelope(d, "upper")
        if envelope is not None:
            env.verify(d)
    except (NoEnvelopeError, ValueError) as exc:
        conds.append(Condition("upper envelope", False, str(exc)))
        return _inapplicable(source, "upper", conds)
    conds.append(Condition("upper envelope on (0,1]", env.side in ("upper", "exact")
                           and env.valid_from_epsilon >= 1.0,
                           f"alpha={env.alpha:g}, ell={env.ell.kind}"))
    if not conds[-1].holds:
        return _inapplicable(source, "upper", conds)
    al, ell = env.alpha, env.ell
    base = c_r(r) * n ** (al - 1.0) * float(ell(n))

    if variant == "ctg":
        conds.append(Condition("ell non-increasing", ell.non_increasing))
        if not ell.non_increasing:
            return _inapplicable(source, "upper", conds)
        t = 1.0 + r - al
        if t <= 0:
            return BoundResult(source, "upper", math.inf, 1.0 / n, True, conds,
                               ["gamma(0, 1/2) is infinite: bound is trivial"])
        val = c1(al, r) * n ** (al - 1.0) * float(ell(n))
        return BoundResult(source, "upper", val, 1.0 / n, True, conds)

    if beta is None:
        beta = 0.5
    ok_beta = 0.0 < beta < 1.0 and beta > 2.0 * (al - r) - 1.0
    conds.append(Condition("beta in (0,1), beta > 2(alpha-r)-1", ok_beta, f"beta={beta:g}"))
    if not ok_beta:
        return _inapplicable(source, "upper", conds)
    expo = al - (1.0 + beta) / 2.0
    if variant == "ctg2":
        val = base + c2(al, beta, r) * n ** expo * ell_circ_beta(ell, beta, n)
        return BoundResult(source, "upper", val, 1.0 / n, True, conds)

    k0 = d.kappa_limit("plus")
    conds.append(Condition("kappa+^0 in (1,2]", 1.0 < k0 <= 2.0, f"kappa+^0={k0:g}"))
    if not conds[-1].holds:
        return _inapplicable(source, "upper", conds)
    k2n = d.kappa("plus", min(1.0, 2.0 / n))
    conds.append(Condition("kappa+(2/n) <= 2 kappa+^0 - 1", k2n <= 2.0 * k0 - 1.0,
                           f"kappa+(2/n)={k2n:g}"))
    if not conds[-1].holds:
        return _inapplicable(source, "upper", conds)
    val = base + (k0 - 1.0) * c2(al, beta, r) * (n / 2.0) ** expo * ell_circ_beta(ell, beta, n / 2.0)
    return BoundResult(source, "upper", val, 1.0 / n, True, conds)


# ---------------------------------------------------------------------------
# kappa-weighted integrals
# ---------------------------------------------------------------------------

def _segment_cumulative(d, table, side, grid, r, m, c):
    """Cumulative int over (grid[0], grid[i]] of level(u) u^r (1 - c u)^m.

    level = (kappa+(2u) - 1) nu(u) for plus, (1 - kappa-(2u)) nu(u) for
    minus.  kappa is non-decreasing and nu non-increasing, so on (a, b] the
    plus level is at most (kappa+(2b) - 1) #{p > a} and the minus level at
    least (1 - kappa-(2b)) nu(b); both are exact when no atom or half-atom
    lies inside (a, b)."""
    left, right = grid[:-1], grid[1:]
    kap = table.values(2.0 * right)
    if side == "plus":
        nu = d.nu_array(np.nextafter(left, np.inf)).astype(float)
        level = np.where(nu > 0, (kap - 1.0) * nu, 0.0)
    else:
        nu = d.nu_array(right).astype(float)
        level = (1.0 - kap) * nu
    seg = kernel_integral_array(r, m, c, left, right)
    with np.errstate(invalid="ignore"):
        contrib = np.where(level == 0, 0.0, level * seg)
    return np.concatenate([[0.0], np.cumsum(contrib)])


_FINE_ATOMS = 200_000
_COARSE_RATIO = 1.001


def _grid(d: Distribution, lo: float, hi: float, extra=()) -> np.ndarray:
    """Atoms and half-atoms in [lo, hi], plus lo, hi and extra points.

    For infinite laws only the first _FINE_ATOMS atoms are used; below them
    a geometric grid stands in, which _segment_cumulative handles soundly."""
    coarse = np.zeros(0)
    if d.is_finite:
        vals, _ = d.distinct_atoms()
    else:
        k = d.nu(lo) if lo > 0 else 0
        if k > _FINE_ATOMS:
            k = _FINE_ATOMS
            u_f = float(d.mass(float(k)))
            steps = int(math.ceil(math.log(u_f / lo) / math.log(_COARSE_RATIO)))
            coarse = np.geomspace(lo, u_f, steps + 1)
        vals = d.mass(np.arange(1, k + 1, dtype=float))
    pts = np.concatenate([vals, vals / 2.0, coarse, [lo, hi], np.asarray(extra, dtype=float)])
    pts = np.unique(pts[(pts >= lo) & (pts <= hi)])
    return pts


class ThetaPlus:
    """theta+(eps) as an upper bound (exact for finite laws), eps <= min(1/2, p*/2)."""

    def __init__(self, d: Distribution, n: int, r: int, resolve_to: float):
        self.d, self.n, self.r = d, n, r
        self.cap = min(0.5, d.p_star / 2.0)
        m = n - r
        self.pref = math.exp((1 + r) * math.log(2.0) + log_binom(n, r))
        self.table = d.kappa_table("plus", min(1.0, 2.0 * max(resolve_to, 1e-300)))
        low = self.table.u0 / 2.0
        self.low = low
        self.head = 0.0
        if not d.is_finite and low > 0:
            # below `low`: kappa+(2u) <= base, so the integrand is at most
            # (base - 1) nu(u) u^r (1 - u/2)^m
            t = d.nu(low)
            j_low = float(kernel_integral_array(r, m, 0.5, 0.0, low))
            below = t * j_low + _kernel_tail(d, t, r, m, 0.5, 1.0)
            self.head = (self.table.base - 1.0) * below
        self.grid = _grid(d, low, self.cap)
        self.cum = _segment_cumulative(d, self.table, "plus", self.grid, r, m, 0.5)

    def __call__(self, eps) -> np.ndarray:
        eps = np.atleast_1d(np.asarray(eps, dtype=float))
        out = np.full(eps.shape, math.inf)
        ok = eps <= self.cap * (1 + 1e-15)
        e = np.minimum(eps[ok], self.cap)
        i = np.searchsorted(self.grid, e, side="left")
        i = np.minimum(i, len(self.grid) - 1)
        # partial segment from grid[i-1] to e, same level as the full one
        full = self.cum[np.maximum(i - 1, 0)]
        seg_full = self.cum[i] - full
        lo = self.grid[np.maximum(i - 1, 0)]
        hi = self.grid[i]
        m = self.n - self.r
        whole = kernel_integral_array(self.r, m, 0.5, lo, hi)
        part = kernel_integral_array(self.r, m, 0.5, lo, np.maximum(np.minimum(e, hi), lo))
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = np.where(whole > 0, part / np.where(whole > 0, whole, 1.0), 0.0)
        val = full + seg_full * frac
        val = np.where(e <= self.low, 0.0, val)
        out[ok] = self.pref * (self.head + val)
        return out


class ThetaMinus:
    """theta-(eps) as a lower bound (exact for finite laws), eps <= 1/2."""

    def __init__(self, d: Distribution, n: int, r: int, resolve_to: float):
        self.d, self.n, self.r = d, n, r
        m = n - r
        self.pref = math.exp(-r * math.log(2.0) + log_binom(n, r))
        self.table = d.kappa_table("minus", min(1.0, 2.0 * max(resolve_to, 1e-300)))
        self.low = self.table.u0 / 2.0
        self.grid = _grid(d, self.low, 0.5)
        self.cum = _segment_cumulative(d, self.table, "minus", self.grid, r, m, 2.0)

    def at_grid(self, eps) -> np.ndarray:
        """Values at points of the grid (candidate right endpoints)."""
        eps = np.atleast_1d(np.asarray(eps, dtype=float))
        i = np.searchsorted(self.grid, eps, side="left")
        if np.any(i >= len(self.grid)) or np.any(self.grid[np.minimum(i, len(self.grid) - 1)] != eps):
            raise ValueError("theta- evaluated off its grid")
        return self.pref * self.cum[i]

    def __call__(self, eps) -> np.ndarray:
        eps = np.atleast_1d(np.asarray(eps, dtype=float))
        if np.any(eps > 0.5) or np.any(eps <= 0):
            raise ValueError("theta- needs 0 < eps <= 1/2")
        i = np.searchsorted(self.grid, eps, side="left")
        out = np.zeros(eps.shape)
        m = self.n - self.r
        for t in range(len(eps)):
            e = eps[t]
            if e <= self.low:
                continue
            j = int(i[t])
            base = self.cum[j - 1]
            if self.grid[j] == e:
                out[t] = self.cum[j]
                continue
            lo, hi = self.grid[j - 1], self.grid[j]
            whole = float(kernel_integral_array(self.r, m, 2.0, lo, hi))
            part = float(kernel_integral_array(self.r, m, 2.0, lo, e))
            seg = self.cum[j] - base
            out[t] = base + (seg * part / whole if whole > 0 else 0.0)
        return self.pref * out


def upper_tgplus(d: Distribution, n: int, r: int) -> BoundResult:
    """inf over 0 < eps <= 1/2 of phi+ + theta+."""
    _check_nr(n, r)
    conds = [Condition("r <= n-1", r <= n - 1)]
    if r > n - 1:
        return _inapplicable("upper_tgplus", "upper", conds)
    cval = c_r(r)
    cap = min(0.5, d.p_star / 2.0)
    conds.append(Condition("feasible eps <= min(1/2, p*/2)", True, f"cap={cap:g}"))
    best, best_eps = math.inf, None
    if d.is_finite:
        # 0+: nu = |S|, theta -> 0
        best, best_eps = cval * d.support_size() / n, 0.0
        vals, above = _desc_candidates(d, 0, len(d.distinct_atoms()[0]))
        keep = vals < cap
        vals, above = vals[keep], above[keep]
        if len(vals):
            th = ThetaPlus(d, n, r, float(vals[-1]))
            sc = cval * above / n + th(vals)
            i = int(np.argmin(sc))
            if sc[i] < best:
                best, best_eps = float(sc[i]), float(vals[i])
        return BoundResult("upper_tgplus", "upper", best, best_eps, True, conds)
    # infinite: atoms below the cap, in two passes
    j0 = d.nu_above(cap) + 1  # first index with p_j < cap... p_j <= cap
    while d.mass(float(j0)) >= cap:
        j0 += 1
    count = 64
    for _ in range(2):
        idx = np.arange(j0, j0 + count, dtype=float)
        vals = d.mass(idx)
        th = ThetaPlus(d, n, r, float(vals[-1]))
        sc = cval * (idx - 1.0) / n + th(vals)
        i = int(np.argmin(sc))
        if sc[i] < best:
            best, best_eps = float(sc[i]), float(vals[i])
        # candidates with (j - 1) c/n >= best cannot win
        need = int(math.floor(best * n / cval)) + 1
        if need < j0 + count:
            break
        count = min(_CAND_CAP, need - j0 + 1)
    conds.append(Condition("kappa+ below the explicit range bounded analytically", True,
                           f"u0={th.table.u0:.3g}, bound={th.table.base:.6g}"))
    return BoundResult("upper_tgplus", "upper", best, best_eps, True, conds)


def lower_low(d: Distribution, n: int, r: int) -> BoundResult:
    """sup over 0 < eps <= 1/2 of phi- + theta-."""
    _check_nr(n, r)
    conds = [Condition("r <= n-1", r <= n - 1)]
    if r > n - 1:
        return _inapplicable("lower_low", "lower", conds)
    m = n - r
    log_c = log_binom(n, r)
    ps = d.p_star
    log_front = log_c + (m * math.log1p(-ps) if ps < 1 else (-math.inf if m > 0 else 0.0))
    if d.is_finite:
        vals, _ = d.distinct_atoms()
        cands = np.unique(np.concatenate([vals[vals <= 0.5], [0.5]]))
    else:
        floor = 1.0 / (64.0 * n)
        k = min(max(d.nu(floor), 1), _CAND_CAP)
        vals = d.mass(np.arange(1, k + 1, dtype=float))
        cands = np.unique(np.concatenate([vals[vals <= 0.5], [0.5]]))
    th = ThetaMinus(d, n, r, float(cands[0]))
    # candidates lie on the theta grid when above its lower cutoff
    on = cands > th.low
    theta = np.zeros(len(cands))
    if on.any():
        theta[on] = th(cands[on])
    nu = d.nu_array(cands).astype(float)
    with np.errstate(divide="ignore"):
        phi = np.where(nu > 0, np.exp(log_front + np.log(np.maximum(nu, 1e-300))
                                      + (r + 1) * np.log(cands)), 0.0)
    sc = phi + theta
    i = int(np.argmax(sc))
    if not d.is_finite:
        conds.append(Condition("theta- below the explicit range dropped", True,
                               f"cutoff={th.low:.3g}"))
    return BoundResult("lower_low", "lower", float(sc[i]), float(cands[i]), True, conds)


# ---------------------------------------------------------------------------
# lower corollary
# ---------------------------------------------------------------------------

def clow_condition_c(alpha: float, r: int, n: int) -> float:
    """int_0^2 u^(r-alpha) (1 - u/n)^n du in closed form (n >= 2)."""
    t = 1.0 + r - alpha
    return n ** t * float(kernel_integral_array(r - alpha, float(n), 1.0, 0.0, 2.0 / n))


def _clow_checks(d, env, k0, n, r):
    al = env.alpha
    out = []
    out.append(Condition("n >= max(2, 1+r)", n >= max(2, 1 + r)))
    out.append(Condition("envelope valid for eps <= 1/n", 1.0 / n <= env.valid_from_epsilon,
                         f"valid up to {env.valid_from_epsilon:.6g}"))
    if not out[0].holds:
        return out
    ka = d.kappa("minus", min(1.0, 2.0 / n))
    out.append(Condition("(a) kappa-(2/n) <= (1+kappa-^0)/2", ka <= (1.0 + k0) / 2.0,
                         f"kappa-(2/n)={ka:.6g}"))
    lhs_b = (1.0 - r / n) ** n
    out.append(Condition("(b) (1-r/n)^n >= e^-r/2", lhs_b >= math.exp(-r) / 2.0, f"{lhs_b:.6g}"))
    g = lower_incomplete_gamma(1.0 + r - al, 2.0)
    lhs_c = clow_condition_c(al, r, n)
    out.append(Condition("(c) int_0^2 u^(r-alpha)(1-u/n)^n du >= gamma(1+r-alpha,2)/2",
                         lhs_c >= g / 2.0, f"{lhs_c:.6g} vs {g / 2.0:.6g}"))
    return out


def lower_clow(d: Distribution, n: int, r: int, envelope: Optional[RVEnvelope] = None) -> BoundResult:
    source = "lower_clow"
    if n < 1 or r < 0:
        raise ValueError("need n >= 1 and r >= 0")
    conds = []
    try:
        env = envelope if envelope is not None else rv_envelope(d, "lower")
        if envelope is not None:
            env.verify(d)
    except (NoEnvelopeError, ValueError) as exc:
        conds.append(Condition("lower envelope", False, str(exc)))
        return _inapplicable(source, "lower", conds)
    conds.append(Condition("ell non-decreasing", env.ell.non_decreasing))
    k0 = d.kappa_limit("minus")
    conds.append(Condition("kappa-^0 < 1", k0 < 1.0, f"kappa-^0={k0:.6g}"))
    if not all(c.holds for c in conds):
        return _inapplicable(source, "lower", conds)
    checks = _clow_checks(d, env, k0, n, r)
    conds.extend(checks)
    n0 = clow_n0(d, r, env)
    conds.append(Condition("n >= n0", n0 is not None and n >= n0, f"n0={n0}"))
    if not all(c.holds for c in checks):
        return _inapplicable(source, "lower", conds)
    al = env.alpha
    g = lower_incomplete_gamma(1.0 + r - al, 2.0)
    bracket = ((1.0 - d.p_star) ** n
               + (1.0 - k0) * g / (2.0 ** (1.0 - al) * 4.0 ** (1 + r)))
    val = math.exp(-r) / (2.0 * math.factorial(r)) * bracket * float(env.ell(n)) / n ** (1.0 - al)
    return BoundResult(source, "lower", val, 1.0 / n, True, conds)


def clow_n0(d: Distribution, r: int, env: Optional[RVEnvelope] = None, cap: int = 10_000_000):
    """Smallest n at which all conditions hold; they are monotone in n."""
    env = env if env is not None else rv_envelope(d, "lower")
    k0 = d.kappa_limit("minus")

    def ok(n):
        return all(c.holds for c in _clow_checks(d, env, k0, n, r))

    lo = max(2, 1 + r)
    if ok(lo):
        return lo
    hi = lo
    while not ok(hi):
        if hi >= cap:
            return None
        lo, hi = hi, min(cap, hi * 2)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# missing-mass bounds via the accrual function
# ---------------------------------------------------------------------------

def od10_bounds(d: Distribution, n: int):
    """sup (1-eps)^n F(eps) <= E M_{n,0} <= inf (1-eps)^n + F(eps)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if d.is_finite:
        vals, counts = d.distinct_atoms()
        above = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(int)
        upto = np.cumsum(counts).astype(int)
    else:
        k = min(max(d.nu(1.0 / (100.0 * n)), 16), _CAND_CAP)
        vals = d.mass(np.arange(1, k + 1, dtype=float))
        above = np.arange(0, k)
        upto = np.arange(1, k + 1)
    # F(p) includes p itself; F(p-) excludes every atom >= p
    f_at = np.array([d.tail_mass(int(a)) for a in above])
    f_left = np.array([d.tail_mass(int(u)) for u in upto])
    with np.errstate(divide="ignore"):
        decay = np.where(vals < 1, np.exp(n * np.log1p(-np.minimum(vals, 1.0))), 0.0)
    lo_sc = decay * f_at
    i = int(np.argmax(lo_sc))
    lower = BoundResult("od10_lower", "lower", float(lo_sc[i]), float(vals[i]), True,
                        [Condition("r = 0", True)])
    up_sc = decay + f_left
    j = int(np.argmin(up_sc))
    up_val, up_eps = float(up_sc[j]), float(vals[j])
    notes = ["infimum approached as eps rises to optimizer_eps"]
    if up_val >= 1.0:
        up_val, up_eps, notes = 1.0, 0.0, []
    upper = BoundResult("od10_upper", "upper", up_val, up_eps, True,
                        [Condition("r = 0", True)], notes)
    return lower, upper


def bk12_upper(d: Distribution, n: int, c: float = 1.0) -> BoundResult:
    if n < 1:
        raise ValueError("n must be >= 1")
    if d.is_finite:
        s = d.support_size()
        val = math.exp(-n / s) if n <= s else s / (n * math.e)
        return BoundResult("bk12_upper", "upper", val, None, True,
                           [Condition("finite support", True)])
    lp, _ = d.L_P()
    cond = Condition("L(P) finite", math.isfinite(lp), f"L(P)={lp}")
    if not cond.holds:
        return _inapplicable("bk12_upper", "upper", [cond])
    return BoundResult("bk12_upper", "upper", lp / (c * n), None, True, [cond],
                       [f"universal constant c={c:g} is not a proven constant"])


def accrual_powerlaw_bounds(c_minus: float, c_plus: float, alpha: float, n: int,
                            d: Distribution, domain: str = "full"):
    """Power-law bounds on E M_{n,0} from C- eps^-alpha <= nu <= C+ eps^-alpha.

    domain="full" checks the hypothesis on all of (0,1) as stated; "proof"
    checks it only on (0, max(1/n, (1-alpha) log n / n)], which is all the two
    choices of eps in the argument use.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if not 0 < c_minus < c_plus:
        raise ValueError("need 0 < C- < C+")
    if domain not in ("full", "proof"):
        raise ValueError("domain must be 'full' or 'proof'")
    top = 1.0 - 1e-12
    if domain == "proof":
        top = min(top, max(1.0 / n, (1.0 - alpha) * math.log(n) / n))
    grid = np.geomspace(1e-12, top, 200)
    nu = d.nu_array(grid).astype(float)
    lo_env = c_minus * grid ** (-alpha)
    hi_env = c_plus * grid ** (-alpha)
    bad_lo = np.nonzero(nu < lo_env * (1 - 1e-12))[0]
    bad_hi = np.nonzero(nu > hi_env * (1 + 1e-12))[0]
    cond_lo = Condition("C- eps^-alpha <= nu", len(bad_lo) == 0,
                        f"fails at eps={grid[bad_lo[0]]:.6g}" if len(bad_lo) else f"checked up to {top:.6g}")
    cond_hi = Condition("nu <= C+ eps^-alpha", len(bad_hi) == 0,
                        f"fails at eps={grid[bad_hi[0]]:.6g}" if len(bad_hi) else f"checked up to {top:.6g}")
    conds = [cond_lo, cond_hi]
    if not (cond_lo.holds and cond_hi.holds):
        return (_inapplicable("accrual_powerlaw_lower", "lower", conds),
                _inapplicable("accrual_powerlaw_upper", "upper", conds))
    cm = max(0.0, c_minus / (1.0 - alpha) - c_plus)
    cp = (1.0 - alpha) ** (1.0 - alpha) * (c_plus / (1.0 - alpha) - c_minus)
    lower = (1.0 - 1.0 / n) ** n * cm / n ** (1.0 - alpha)
    upper = (1.0 + cp * math.log(n) ** (1.0 - alpha)) / n ** (1.0 - alpha)
    eps_up = (1.0 - alpha) * math.log(n) / n
    return (BoundResult("accrual_powerlaw_lower", "lower", lower, 1.0 / n, True, conds),
            BoundResult("accrual_powerlaw_upper", "upper", upper, eps_up, True, conds))


def accrual_constants(c_minus: float, c_plus: float, alpha: float):
    """(C^-_alpha, C^+_alpha)."""
    cm = max(0.0, c_minus / (1.0 - alpha) - c_plus)
    cp = (1.0 - alpha) ** (1.0 - alpha) * (c_plus / (1.0 - alpha) - c_minus)
    return cm, cp


# ---------------------------------------------------------------------------
# liminf chain
# ---------------------------------------------------------------------------

@dataclass
class LiminfResult:
    k_n: int
    atom_index: int
    atom_mass: float
    certified_lower: float
    left_side: float
    holds: bool
    applicable: bool = True

    def implied_bound(self, n: int, r: int) -> float:
        """E M_{n,r} >= C(n,r) k^-(r+1) certified_lower."""
        return math.exp(log_binom(n, r) - (r + 1) * math.log(self.k_n)) * self.certified_lower


def liminf_chain(d: Distribution, n: int, r: int) -> LiminfResult:
    if d.is_finite:
        return LiminfResult(0, 0, 0.0, 0.0, 0.0, False, applicable=False)
    if not (n >= 1 and 0 <= r < n):
        raise ValueError("need 0 <= r < n")
    idx = d.nu_above(1.0 / n) + 1  # first atom with p <= 1/n
    p = float(d.mass(float(idx)))
    k = int(math.floor(1.0 / p))
    cert = (1.0 - p) * (1.0 - 1.0 / k) ** k
    em = exact_EM_certified(d, n, r).value
    left = math.exp((r + 1) * math.log(k) - log_binom(n, r)) * em
    return LiminfResult(k, idx, p, cert, left, left >= cert * (1 - 1e-12))


# ---------------------------------------------------------------------------
# suite
# ---------------------------------------------------------------------------

@dataclass
class BoundReport:
    distribution: dict
    n: int
    r: int
    exact: float
    exact_certificate: float
    bounds: list
    verdict: bool
    violations: list

    def tightest(self, side: str) -> Optional[BoundResult]:
        live = [b for b in self.bounds if b.applicable and b.side == side and b.source in self._sandwich]
        if not live:
            return None
        return min(live, key=lambda b: b.value) if side == "upper" else max(live, key=lambda b: b.value)

    _sandwich: tuple = ()

    def to_dict(self) -> dict:
        up, lo = self.tightest("upper"), self.tightest("lower")
        return {
            "distribution": self.distribution,
            "n": self.n,
            "r": self.r,
            "exact": self.exact,
            "exact_certificate": self.exact_certificate,
            "bounds": [dict(b.to_dict(), exact=self.exact, verdict=_verdict(b, self.exact))
                       for b in self.bounds],
            "tightest_upper": up.source if up else None,
            "tightest_lower": lo.source if lo else None,
            "verdict": self.verdict,
            "violations": self.violations,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _verdict(b: BoundResult, exact: float) -> str:
    if not b.applicable:
        return "inapplicable"
    if b.side == "upper":
        return "ok" if b.value >= exact - SLACK else "violated"
    return "ok" if b.value <= exact + SLACK else "violated"


def bound_suite(d: Distribution, n: int, r: int, b: float = 2.0) -> BoundReport:
    _check_nr(n, r)
    ex = exact_EM_certified(d, n, r)
    out = [upper_tg(d, n, r, b), upper_finite(d, n, r)]
    if r <= n - 1:
        if n >= 2:
            for v in ("ctg", "ctg2", "ctg3"):
                out.append(upper_rv(d, n, r, v))
        out.append(upper_tgplus(d, n, r))
        out.append(lower_low(d, n, r))
        if not d.is_finite:
            lim = liminf_chain(d, n, r)
            out.append(BoundResult("liminf_chain", "lower", lim.implied_bound(n, r),
                                   1.0 / lim.k_n, True,
                                   [Condition("chain holds", lim.holds,
                                              f"k_n={lim.k_n}, certified={lim.certified_lower:.6g}")]))
    out.append(lower_clow(d, n, r))
    if r == 0:
        lo, up = od10_bounds(d, n)
        out.extend([lo, up])
        out.append(bk12_upper(d, n))
    # the bk12 constant is unspecified for infinite supports
    sandwich = tuple(x.source for x in out if not (x.source == "bk12_upper" and not d.is_finite))
    violations = [x.source for x in out if x.source in sandwich and _verdict(x, ex.value) == "violated"]
    rep = BoundReport(d.to_dict(), n, r, ex.value, ex.certificate, out, not violations, violations)
    rep._sandwich = sandwich
    return rep
