"""delta-neighbourhood occupancy for laws on a metric space.

Supported spaces are a segment [a, b] with a piecewise-constant density and
finite point sets (1-D coordinates or an explicit distance matrix), plus the
embedding of a discrete law on the lattice spacing * {1, 2, ...}.

On the segment the ball mass B(x) = P((x - delta, x + delta)) is piecewise
linear in x, so every integral of a function of B against the density is a
sum of closed-form one-dimensional integrals in B.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .bounds import BoundResult, Condition
from .dist import Distribution
from .exact import exact_EM
from .numerics import kernel_integral, log_binom, lower_incomplete_gamma
from .simulate import SeedSpec, AliasTable

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_EXACT_COVER_MAX = 20


@dataclass
class MetricModel:
    space: str  # "segment", "points" or "lattice"
    a: float = 0.0
    b: float = 1.0
    edges: Optional[np.ndarray] = None  # segment cell edges
    weights: Optional[np.ndarray] = None  # segment cell masses
    coords: Optional[np.ndarray] = None
    masses: Optional[np.ndarray] = None
    metric: Optional[np.ndarray] = None
    dist: Optional[Distribution] = None
    spacing: float = 1.0
    _ball_cache: dict = field(default_factory=dict, repr=False)

    # -- construction -----------------------------------------------------

    @classmethod
    def segment(cls, a: float = 0.0, b: float = 1.0, edges=None, weights=None) -> "MetricModel":
        if not b > a:
            raise ValueError("need a < b")
        if edges is None:
            edges, weights = [a, b], [1.0]
        e = np.asarray(edges, dtype=float)
        w = np.asarray(weights, dtype=float)
        if len(e) != len(w) + 1 or e[0] != a or e[-1] != b or np.any(np.diff(e) <= 0):
            raise ValueError("edges must increase from a to b, one more than weights")
        if np.any(w <= 0) or abs(math.fsum(w) - 1.0) > 1e-12:
            raise ValueError("cell masses must be positive and sum to 1")
        return cls("segment", a=a, b=b, edges=e, weights=w)

    @classmethod
    def points(cls, masses, coords=None, metric=None) -> "MetricModel":
        m = np.asarray(masses, dtype=float)
        if np.any(m <= 0) or abs(math.fsum(m) - 1.0) > 1e-12:
            raise ValueError("masses must be positive and sum to 1")
        if (coords is None) == (metric is None):
            raise ValueError("give exactly one of coords or metric")
        c = None if coords is None else np.asarray(coords, dtype=float)
        d = None if metric is None else np.asarray(metric, dtype=float)
        if c is not None and len(c) != len(m):
            raise ValueError("one coordinate per atom")
        if d is not None and (d.shape != (len(m), len(m)) or np.any(d < 0)
                              or np.any(np.diag(d) != 0) or np.any(d != d.T)):
            raise ValueError("metric must be a symmetric non-negative matrix with zero diagonal")
        return cls("points", coords=c, masses=m, metric=d)

    @classmethod
    def lattice(cls, dist: Distribution, spacing: float = 1.0) -> "MetricModel":
        """Atom k of dist at coordinate k * spacing."""
        if not spacing > 0:
            raise ValueError("spacing must be positive")
        return cls("lattice", dist=dist, spacing=spacing)

    @classmethod
    def from_config(cls, cfg: dict) -> "MetricModel":
        cfg = dict(cfg)
        space = cfg.pop("space", None)
        if space == "segment":
            a, b = float(cfg.pop("a", 0.0)), float(cfg.pop("b", 1.0))
            law = cfg.pop("law", "uniform")
            if law == "uniform":
                out = cls.segment(a, b)
            elif law == "piecewise":
                out = cls.segment(a, b, cfg.pop("edges"), cfg.pop("weights"))
            else:
                raise ValueError(f"unknown segment law {law!r}")
        elif space == "points":
            out = cls.points(cfg.pop("masses"), cfg.pop("coords", None), cfg.pop("metric", None))
        elif space == "lattice":
            out = cls.lattice(Distribution.from_config(cfg.pop("distribution")),
                              float(cfg.pop("spacing", 1.0)))
        else:
            raise ValueError(f"unknown space {space!r}")
        if cfg:
            raise ValueError(f"unexpected keys {sorted(cfg)}")
        return out

    def to_dict(self) -> dict:
        if self.space == "segment":
            return {"space": "segment", "a": self.a, "b": self.b, "law": "piecewise",
                    "edges": self.edges.tolist(), "weights": self.weights.tolist()}
        if self.space == "points":
            out = {"space": "points", "masses": self.masses.tolist()}
            if self.coords is not None:
                out["coords"] = self.coords.tolist()
            else:
                out["metric"] = self.metric.tolist()
            return out
        return {"space": "lattice", "distribution": self.dist.to_dict(), "spacing": self.spacing}

    # -- geometry ---------------------------------------------------------

    def _cdf(self, y):
        """P([a, y]) for the segment law."""
        y = np.clip(np.asarray(y, dtype=float), self.a, self.b)
        cum = np.concatenate([[0.0], np.cumsum(self.weights)])
        i = np.clip(np.searchsorted(self.edges, y, side="right") - 1, 0, len(self.weights) - 1)
        width = self.edges[i + 1] - self.edges[i]
        return cum[i] + self.weights[i] * (y - self.edges[i]) / width

    def _density(self, x):
        i = np.clip(np.searchsorted(self.edges, x, side="right") - 1, 0, len(self.weights) - 1)
        return self.weights[i] / (self.edges[i + 1] - self.edges[i])

    def _distance_matrix_less(self, delta: float) -> np.ndarray:
        """[d(i, j) < delta] over atoms, exact for coordinate models."""
        key = float(delta)
        if key in self._ball_cache:
            return self._ball_cache[key]
        k = len(self.masses)
        if self.metric is not None:
            out = self.metric < delta
        elif k <= 2000:
            fr = [Fraction(float(c)) for c in self.coords]
            fd = Fraction(float(delta))
            out = np.array([[abs(fr[i] - fr[j]) < fd for j in range(k)] for i in range(k)])
        else:
            out = np.abs(self.coords[:, None] - self.coords[None, :]) < delta
        self._ball_cache[key] = out
        return out

    def atom_ball_masses(self, delta: float) -> np.ndarray:
        """P(B_{x_i, delta}) at each atom of a points model."""
        return self._distance_matrix_less(delta).astype(float) @ self.masses

    def _lattice_check(self, delta: float) -> None:
        if delta > self.spacing:
            raise ValueError("lattice models need delta <= spacing, so balls isolate atoms")

    def ball_mass(self, x, delta: float):
        """P(B_{x, delta}); x is a coordinate (segment, 1-D points) or an atom index
        (metric-matrix points and lattice, 1-based for the lattice)."""
        if not delta > 0:
            raise ValueError("delta must be positive")
        if self.space == "segment":
            x = np.asarray(x, dtype=float)
            out = self._cdf(x + delta) - self._cdf(x - delta)
            return float(out) if out.ndim == 0 else out
        if self.space == "lattice":
            self._lattice_check(delta)
            return self.dist.mass(x) if not self.dist.is_finite else float(
                self.dist.descending_masses(int(x))[int(x) - 1])
        if self.metric is not None:
            return float(self.masses[self.metric[int(x)] < delta].sum())
        fx, fd = Fraction(float(x)), Fraction(float(delta))
        return math.fsum(m for c, m in zip(self.coords, self.masses) if abs(Fraction(float(c)) - fx) < fd)

    def p_star(self, delta: float) -> float:
        if self.space == "segment":
            xs, _ = self._pieces(delta)
            return float(np.max(self.ball_mass(xs, delta)))
        if self.space == "lattice":
            self._lattice_check(delta)
            return self.dist.p_star
        return float(np.max(self.atom_ball_masses(delta)))

    def _pieces(self, delta: float):
        """Breakpoints in x between which the density and B(x) are affine."""
        e = self.edges
        pts = np.concatenate([e, e - delta, e + delta])
        pts = np.unique(np.clip(pts, self.a, self.b))
        mids = 0.5 * (pts[:-1] + pts[1:])
        return pts, mids

    # -- sampling ---------------------------------------------------------

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Coordinates (segment) or atom indices (points, lattice: 1-based)."""
        if self.space == "segment":
            cell = np.searchsorted(np.cumsum(self.weights), rng.random(n) * math.fsum(self.weights),
                                   side="right")
            cell = np.minimum(cell, len(self.weights) - 1)
            lo, hi = self.edges[cell], self.edges[cell + 1]
            return lo + (hi - lo) * rng.random(n)
        if self.space == "points":
            return AliasTable(self.masses).draw(rng, n)
        from .simulate import draw

        return draw(self.dist, n, rng)


# ---------------------------------------------------------------------------
# counts and occupancy
# ---------------------------------------------------------------------------

def xi_delta(points: Sequence, x, delta: float) -> int:
    """#{i : |points_i - x| < delta}, with exact rational comparisons."""
    fx, fd = Fraction(x), Fraction(delta)
    return sum(1 for p in points if abs(Fraction(p) - fx) < fd)


def _kernel(n: Optional[int], r: int, lam: Optional[float]):
    """K(B) = C(n,r) B^r (1-B)^(n-r) or Lambda^r/r! B^r e^(-Lambda B), and its
    antiderivative difference on [lo, hi]."""
    if lam is None:
        lc = log_binom(n, r)

        def val(bm):
            bm = np.asarray(bm, dtype=float)
            with np.errstate(divide="ignore"):
                lg = lc + (r * np.log(bm) if r else 0.0) + ((n - r) * np.log1p(-bm) if n - r else 0.0)
            return np.exp(lg)

        def integral(lo, hi):
            return math.exp(lc) * kernel_integral(r, n - r, 1.0, lo, hi)
    else:
        lf = r * math.log(lam) - math.lgamma(r + 1.0)

        def val(bm):
            bm = np.asarray(bm, dtype=float)
            with np.errstate(divide="ignore"):
                return np.exp(lf + (r * np.log(bm) if r else 0.0) - lam * bm)

        def integral(lo, hi):
            return (lower_incomplete_gamma(r + 1.0, lam * hi) - lower_incomplete_gamma(r + 1.0, lam * lo)) \
                / (lam * math.exp(math.lgamma(r + 1.0)))
    return val, integral


def _segment_integral(model: MetricModel, delta: float, val, integral) -> float:
    """int f(x) K(B(x)) dx over the segment."""
    pts, mids = model._pieces(delta)
    dens = model._density(mids)
    b_lo = model.ball_mass(pts[:-1], delta)
    b_hi = model.ball_mass(pts[1:], delta)
    total = []
    for x0, x1, f, b0, b1 in zip(pts[:-1], pts[1:], dens, b_lo, b_hi):
        width = x1 - x0
        db = b1 - b0
        if abs(db) > 1e-3 * (abs(b0) + abs(b1)):
            lo, hi = min(b0, b1), max(b0, b1)
            total.append(f * width / abs(db) * integral(lo, hi))
        else:
            # nearly flat ball mass: Gauss-Legendre in x is exact to high order
            xs = 0.5 * (_GL_X + 1.0)
            bs = b0 + db * xs
            total.append(f * width * 0.5 * float(np.dot(_GL_W, val(bs))))
    return math.fsum(total)


def exact_EM_delta(model: MetricModel, n: Optional[int], delta: float, r: int,
                   poissonized_Lambda: Optional[float] = None) -> float:
    """E M^(delta)_{n,r}, or its Poissonized analogue when Lambda is given."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    lam = poissonized_Lambda
    if lam is None:
        if n is None or n < 1 or not 0 <= r <= n:
            raise ValueError("need n >= 1 and 0 <= r <= n")
    elif not lam > 0:
        raise ValueError("Lambda must be positive")
    if model.space == "lattice":
        model._lattice_check(delta)
        if lam is None:
            return exact_EM(model.dist, n, r)
        from .poisson import exact_EM_poisson

        return exact_EM_poisson(model.dist, lam, r)
    val, integral = _kernel(n, r, lam)
    if model.space == "points":
        bm = model.atom_ball_masses(delta)
        return math.fsum(model.masses * val(bm))
    return _segment_integral(model, delta, val, integral)


def nu_delta(model: MetricModel, delta: float, eps: float) -> float:
    """int over {B >= eps} of B(x)^-1 P(dx)."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if model.space == "lattice":
        model._lattice_check(delta)
        return float(model.dist.nu(eps))
    if model.space == "points":
        bm = model.atom_ball_masses(delta)
        keep = bm >= eps
        return math.fsum(model.masses[keep] / bm[keep])
    pts, mids = model._pieces(delta)
    dens = model._density(mids)
    b_lo = model.ball_mass(pts[:-1], delta)
    b_hi = model.ball_mass(pts[1:], delta)
    total = []
    for x0, x1, f, b0, b1 in zip(pts[:-1], pts[1:], dens, b_lo, b_hi):
        width = x1 - x0
        lo, hi = min(b0, b1), max(b0, b1)
        if hi - lo <= 1e-9 * hi:
            # flat up to rounding; log(hi/lo)/(hi-lo) would lose every digit
            bm = 0.5 * (lo + hi)
            if bm >= eps:
                total.append(f * width / bm)
            continue
        if hi < eps:
            continue
        cut = max(lo, eps)
        total.append(f * width / (hi - lo) * math.log1p((hi - cut) / cut))
    return math.fsum(total)


def nu_delta_integral(model: MetricModel, delta: float) -> float:
    """int_0^1 nu_delta(eps) d eps, which equals int u nu_delta(du) = 1."""
    from scipy.integrate import quad

    if model.space == "points":
        bm = np.unique(model.atom_ball_masses(delta))
        pts = np.concatenate([[0.0], bm, [1.0]])
    else:
        pts = np.linspace(0.0, 1.0, 2)
        if model.space == "segment":
            xs, _ = model._pieces(delta)
            pts = np.unique(np.concatenate([pts, model.ball_mass(xs, delta)]))
    total = []
    for lo, hi in zip(pts[:-1], pts[1:]):
        if hi > lo:
            v, _ = quad(lambda e: nu_delta(model, delta, e) if e > 0 else nu_delta(model, delta, 1e-300),
                        lo, hi, epsabs=1e-12, epsrel=1e-12, limit=200)
            total.append(v)
    return math.fsum(total)


# ---------------------------------------------------------------------------
# covering bound
# ---------------------------------------------------------------------------

def _min_cover(targets: list, balls: list) -> int:
    """Smallest number of sets from `balls` covering `targets` (bitmasks);
    exact for at most _EXACT_COVER_MAX targets, greedy above."""
    universe = 0
    for t in targets:
        universe |= 1 << t
    if universe == 0:
        return 0
    masks = list({b & universe for b in balls if b & universe})
    if len(targets) <= _EXACT_COVER_MAX:
        for k in range(1, len(masks) + 1):
            for combo in itertools.combinations(masks, k):
                acc = 0
                for m in combo:
                    acc |= m
                if acc == universe:
                    return k
    left, count = universe, 0
    while left:
        best = max(masks, key=lambda m: bin(m & left).count("1"))
        left &= ~best
        count += 1
    return count


def covering_number(model: MetricModel, x, t: float, rho: float) -> int:
    """Balls of radius rho needed to cover B_{x,t} (up to P-null sets)."""
    if model.space == "segment":
        lo, hi = max(model.a, x - t), min(model.b, x + t)
        if hi <= lo:
            return 0
        return int(math.ceil((hi - lo) / (2.0 * rho) - 1e-12))
    if model.space != "points":
        raise ValueError("covering numbers need a segment or a finite point set")
    k = len(model.masses)
    if model.metric is not None:
        targets = [i for i in range(k) if model.metric[int(x), i] < t]
    else:
        fx, ft = Fraction(float(x)), Fraction(float(t))
        targets = [i for i in range(k) if abs(Fraction(float(model.coords[i])) - fx) < ft]
    near = model._distance_matrix_less(rho)
    balls = [sum(1 << j for j in range(k) if near[i, j]) for i in range(k)]
    return _min_cover(targets, balls)


def default_candidates(model: MetricModel, delta: float) -> list:
    if model.space == "segment":
        xs = [0.5 * (model.a + model.b)]
        span = model.b - model.a
        ts = [span * f for f in (0.25, 0.5, 0.75, 1.0)]
    elif model.space == "points":
        xs = list(model.coords) if model.coords is not None else list(range(len(model.masses)))
        top = float(np.max(model.metric)) if model.metric is not None else float(np.ptp(model.coords))
        ts = [top * f + 1e-9 for f in (0.25, 0.5, 1.0)] + [top + 1.0]
    else:
        return []
    return [(x, t, rho) for x in xs for t in ts for rho in (delta / 2.0, delta / 4.0)]


def bkgen_upper(model: MetricModel, n: int, delta: float, candidates=None) -> BoundResult:
    """min over (x, t, rho) of 1 - P(B_{x,t}) + N(B_{x,t}, rho)/(n e), rho <= delta/2."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if model.space == "lattice":
        return BoundResult("bkgen_upper", "upper", math.inf, None, False,
                           [Condition("segment or finite point set", False)])
    cands = list(candidates) if candidates is not None else default_candidates(model, delta)
    best, arg, notes = math.inf, None, []
    for x, t, rho in cands:
        if not (t > 0 and rho > 0):
            notes.append(f"rejected {(x, t, rho)}: need t > 0 and rho > 0")
            continue
        if rho > delta / 2.0:
            notes.append(f"rejected {(x, t, rho)}: rho > delta/2")
            continue
        if model.space == "points" and model.metric is None:
            tau = 1.0 - model.ball_mass(x, t)
        elif model.space == "points":
            tau = 1.0 - float(model.masses[model.metric[int(x)] < t].sum())
        else:
            tau = 1.0 - model.ball_mass(x, t)
        val = max(tau, 0.0) + covering_number(model, x, t, rho) / (n * math.e)
        if val < best:
            best, arg = val, (x, t, rho)
    conds = [Condition("some candidate with rho <= delta/2", arg is not None)]
    if arg is None:
        return BoundResult("bkgen_upper", "upper", math.inf, None, False, conds, notes)
    res = BoundResult("bkgen_upper", "upper", best, None, True, conds, notes)
    res.notes.append(f"argmin (x, t, rho) = {arg}")
    return res


# ---------------------------------------------------------------------------
# realized occupancy
# ---------------------------------------------------------------------------

def M_delta_empirical(model: MetricModel, sample, delta: float, r: int, probes: int = 10_000,
                      seed: Optional[SeedSpec] = None, replicate: int = 0) -> float:
    """P(xi_delta(X) = r | sample): exact for atom laws, probe average otherwise."""
    if probes < 1:
        raise ValueError("probes must be >= 1")
    sample = np.asarray(sample)
    if model.space == "lattice":
        model._lattice_check(delta)
        vals, counts = np.unique(sample, return_counts=True)
        if r == 0:
            from .simulate import letter_masses

            return 1.0 - math.fsum(letter_masses(model.dist, vals))
        from .simulate import letter_masses

        return math.fsum(letter_masses(model.dist, vals[counts == r]))
    if model.space == "points":
        near = model._distance_matrix_less(delta)
        idx = sample.astype(np.int64)
        xi = near[:, idx].sum(axis=1) if len(idx) else np.zeros(len(model.masses))
        return math.fsum(model.masses[xi == r])
    seed = seed if seed is not None else SeedSpec(0)
    rng = seed.rng(replicate, stream=2)
    xs = model.sample(probes, rng)
    srt = np.sort(sample.astype(float))
    # xi(x) = #{s : x - delta < s < x + delta}
    hi = np.searchsorted(srt, xs + delta, side="left")
    lo = np.searchsorted(srt, xs - delta, side="right")
    return float(np.mean((hi - lo) == r))
