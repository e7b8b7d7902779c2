"""Turing-type estimators, their exact bias, and intervals in probability."""
from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .dist import Distribution, NoEnvelopeError, rv_envelope
from .exact import (
    exact_EK_certified,
    exact_EK_tail_certified,
    exact_EM,
    km_transfer,
)
from .numerics import UnsupportedFormError, log_binom, lower_incomplete_gamma

MAX_MODIFIED_S = 60


@dataclass(frozen=True)
class SampleSummary:
    """Histogram of an n-sample; letters are opaque labels."""

    n: int
    letters: tuple
    counts: tuple

    def __post_init__(self):
        if len(self.letters) != len(self.counts):
            raise ValueError("letters and counts differ in length")
        if any(c <= 0 for c in self.counts):
            raise ValueError("counts must be positive")
        if sum(self.counts) != self.n:
            raise ValueError("counts must sum to n")

    @classmethod
    def from_histogram(cls, hist: dict) -> "SampleSummary":
        items = sorted(hist.items(), key=lambda kv: str(kv[0]))
        items = [(k, int(v)) for k, v in items if int(v) > 0]
        return cls(sum(v for _, v in items), tuple(k for k, _ in items), tuple(v for _, v in items))

    @classmethod
    def from_tokens(cls, tokens: Iterable) -> "SampleSummary":
        return cls.from_histogram(Counter(tokens))

    @classmethod
    def from_arrays(cls, letters: np.ndarray, counts: np.ndarray) -> "SampleSummary":
        counts = np.asarray(counts, dtype=np.int64)
        return cls(int(counts.sum()), tuple(np.asarray(letters).tolist()), tuple(counts.tolist()))

    @classmethod
    def from_file(cls, path: str, column: Optional[str] = None) -> "SampleSummary":
        """Newline-delimited tokens, or one column of a CSV file."""
        with open(path, newline="") as fh:
            if column is None:
                return cls.from_tokens(line.strip() for line in fh if line.strip())
            return cls.from_tokens(row[column] for row in csv.DictReader(fh))

    @property
    def histogram(self) -> dict:
        return dict(zip(self.letters, self.counts))

    @property
    def occupancy(self) -> dict:
        """r -> K_{n,r} for r >= 1 with K_{n,r} > 0."""
        return dict(sorted(Counter(self.counts).items()))

    def K(self, r: int) -> int:
        if r < 1:
            raise ValueError("K_{n,0} needs the alphabet; use realized_KM")
        return sum(1 for c in self.counts if c == r)

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "histogram": {str(k): v for k, v in self.histogram.items()}},
                          sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SampleSummary":
        obj = json.loads(text)
        out = cls.from_histogram(obj["histogram"])
        if out.n != obj["n"]:
            raise ValueError("histogram does not sum to n")
        return out


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------

def turing(summary: SampleSummary, r: int) -> float:
    """T_{n,r} = (1+r) K_{n,1+r} / n."""
    if r < 0 or r + 1 > summary.n:
        raise ValueError("need 0 <= r and r+1 <= n")
    return (1.0 + r) * summary.K(r + 1) / summary.n


def turing_modified(summary: SampleSummary, s: int) -> float:
    """T^(s)_{n,0} = sum_{i=1}^s (-1)^(i+1) K_{n,i} / C(n,i)."""
    n = summary.n
    if not 1 <= s <= n:
        raise ValueError("need 1 <= s <= n")
    if s > MAX_MODIFIED_S:
        raise UnsupportedFormError(f"s > {MAX_MODIFIED_S} is not supported")
    occ = summary.occupancy
    terms = []
    for i in range(1, s + 1):
        k = occ.get(i, 0)
        if k:
            terms.append((-1.0) ** (i + 1) * math.exp(math.log(k) - log_binom(n, i)))
    return math.fsum(terms)


def bias_exact(d: Distribution, n: int, r: int, estimator: str = "turing",
               s: Optional[int] = None) -> float:
    """E[M - T] for Turing's formula or its s-th modification (r = 0)."""
    if estimator == "turing":
        if n < 2:
            raise ValueError("turing bias needs n >= 2")
        return exact_EM(d, n, r) - exact_EM(d, n - 1, r)
    if estimator == "modified":
        if r != 0:
            raise ValueError("modified estimators target r = 0")
        if s is None or not 1 <= s <= n:
            raise ValueError("need 1 <= s <= n")
        return (-1.0) ** s * math.exp(-log_binom(n, s)) * exact_EM(d, n, s)
    raise ValueError(f"unknown estimator {estimator!r}")


def expected_modified(d: Distribution, n: int, s: int) -> float:
    """E T^(s)_{n,0} = sum_i (-1)^(i+1) E K_{n,i} / C(n,i)."""
    terms = [(-1.0) ** (i + 1) * math.exp(-log_binom(n, i)) * exact_EK_certified(d, n, i).value
             for i in range(1, s + 1)]
    return math.fsum(terms)


# ---------------------------------------------------------------------------
# intervals in probability
# ---------------------------------------------------------------------------

@dataclass
class ProbabilisticInterval:
    lower: float
    upper: float
    confidence_floor: float
    t: float
    source: str
    applicable: bool = True
    notes: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def contains(self, x: float) -> bool:
        return self.lower <= x <= self.upper

    def to_dict(self) -> dict:
        enc = lambda v: v if math.isfinite(v) else ("inf" if v > 0 else "-inf")  # noqa: E731
        return {"source": self.source, "lower": enc(self.lower), "upper": enc(self.upper),
                "confidence_floor": self.confidence_floor, "t": self.t,
                "applicable": self.applicable, "notes": list(self.notes),
                "details": {k: (enc(v) if isinstance(v, float) else v) for k, v in self.details.items()}}


def _inapplicable(source, t, notes, floor=float("nan")) -> ProbabilisticInterval:
    return ProbabilisticInterval(-math.inf, math.inf, floor, t, source, False, list(notes))


def mo03_radii(n: int, t: float):
    """(lower, upper) half-widths sqrt(2t/(ne)) and sqrt(t/n)."""
    return math.sqrt(2.0 * t / (n * math.e)), math.sqrt(t / n)


def _em_bounds(d: Distribution, n: int):
    from .bounds import bound_suite

    rep = bound_suite(d, n, 0)
    lo, up = rep.tightest("lower"), rep.tightest("upper")
    return (lo.value if lo else 0.0), (up.value if up else 1.0)


def concentration_interval(kind: str, d: Optional[Distribution], n: int, r: int, t: float,
                           e_minus: Optional[float] = None,
                           e_plus: Optional[float] = None) -> ProbabilisticInterval:
    if not t > 0:
        raise ValueError("t must be positive")
    if n < 1:
        raise ValueError("n must be >= 1")
    if kind in ("mo03", "mo03_upper", "mo03_lower"):
        return _mo03(kind, d, n, r, t, e_minus, e_plus)
    if kind == "cbmm1":
        return _cbmm1(d, n, r, t)
    if kind == "cbmm3":
        return _cbmm3(d, n, r, t)
    if kind == "bbo15":
        return _bbo15(d, n, r, t)
    raise ValueError(f"unknown interval kind {kind!r}")


def _mo03(kind, d, n, r, t, e_minus, e_plus):
    if r != 0:
        return _inapplicable(kind, t, ["missing mass only (r = 0)"])
    if e_minus is None or e_plus is None:
        if d is None:
            raise ValueError("need a distribution or both bounds on E M_{n,0}")
        lo, up = _em_bounds(d, n)
        e_minus = lo if e_minus is None else e_minus
        e_plus = up if e_plus is None else e_plus
    rl, ru = mo03_radii(n, t)
    side = 1.0 - math.exp(-t)
    det = {"E_minus": float(e_minus), "E_plus": float(e_plus), "radius_lower": rl,
           "radius_upper": ru, "side_floor": side}
    if kind == "mo03_upper":
        return ProbabilisticInterval(-math.inf, e_plus + ru, side, t, kind, details=det)
    if kind == "mo03_lower":
        return ProbabilisticInterval(e_minus - rl, math.inf, side, t, kind, details=det)
    return ProbabilisticInterval(e_minus - rl, e_plus + ru, 1.0 - 2.0 * math.exp(-t), t, kind,
                                 notes=["each side holds with probability >= 1-e^-t"], details=det)


def _cbmm1(d, n, r, t):
    if r != 0:
        return _inapplicable("cbmm1", t, ["missing mass only (r = 0)"])
    if d is None or d.is_finite:
        return _inapplicable("cbmm1", t, ["needs an infinite support"])
    if n < 2:
        return _inapplicable("cbmm1", t, ["needs n >= 2"])
    try:
        env = rv_envelope(d, "upper")
    except NoEnvelopeError as exc:
        return _inapplicable("cbmm1", t, [str(exc)])
    if not env.ell.non_increasing:
        return _inapplicable("cbmm1", t, ["ell must be non-increasing"])
    al = env.alpha
    core = (math.exp(-1.0) + 4.0 * lower_incomplete_gamma(1.0 - al, 0.5)) * float(env.ell(n)) / n ** (1.0 - al)
    up = core + math.sqrt(t / n)
    return ProbabilisticInterval(0.0, up, 1.0 - math.exp(-t), t, "cbmm1",
                                 notes=["one-sided upper bound"], details={"core": core})


def cbmm3_conditions(d: Distribution, n: int) -> list:
    """(name, holds, detail) for the Zipf simultaneous interval."""
    al, z = d.alpha, d.zeta
    out = []
    nmin = max(2.0, 2.0 ** (1.0 / al) * z)
    out.append(("n >= max(2, 2^(1/alpha) zeta(1/alpha))", n >= nmin, f"{nmin:.6g}"))
    if n >= 2:
        k = d.kappa("minus", min(1.0, 2.0 / n))
        lim = (2.0 ** al + 1.0) / 2.0 ** (al + 1.0)
        out.append(("kappa-(2/n) <= (2^alpha+1)/2^(alpha+1)", k <= lim, f"{k:.6g} vs {lim:.6g}"))
        from .bounds import clow_condition_c

        lhs = clow_condition_c(al, 0, n)
        g = lower_incomplete_gamma(1.0 - al, 2.0)
        out.append(("int_0^2 u^-alpha (1-u/n)^n du >= gamma(1-alpha,2)/2", lhs >= g / 2.0,
                    f"{lhs:.6g} vs {g / 2.0:.6g}"))
    return out


def _cbmm3(d, n, r, t):
    if r != 0:
        return _inapplicable("cbmm3", t, ["missing mass only (r = 0)"])
    if d is None or d.family != "zipf":
        return _inapplicable("cbmm3", t, ["needs a Zipf law"])
    conds = cbmm3_conditions(d, n)
    failed = [c[0] for c in conds if not c[1]]
    if failed:
        iv = _inapplicable("cbmm3", t, [f"condition fails: {f}" for f in failed])
        iv.details = {"conditions": [list(c) for c in conds]}
        return iv
    al, z = d.alpha, d.zeta
    rl, ru = mo03_radii(n, t)
    scale = z ** (-al) / n ** (1.0 - al)
    core_lo = (2.0 ** al - 1.0) * lower_incomplete_gamma(1.0 - al, 2.0) / 32.0 * scale
    core_up = (math.exp(-1.0) + 4.0 * lower_incomplete_gamma(1.0 - al, 0.5)) * scale
    lo, up = core_lo - rl, core_up + ru
    notes = []
    if lo < 0:
        notes.append("lower endpoint is negative; M_{n,0} >= 0 makes it vacuous")
    return ProbabilisticInterval(lo, up, 1.0 - 2.0 * math.exp(-t), t, "cbmm3", notes=notes,
                                 details={"core_lower": core_lo, "core_upper": core_up,
                                          "conditions": [list(c) for c in conds]})


def _ek_upper(d, n, r):
    if r > n:
        return 0.0
    c = exact_EK_certified(d, n, r)
    return c.value + c.certificate


def bbo15_variance_proxy(d: Distribution, n: int, r: int) -> float:
    """Upper surrogate for v_{n,r} = 2 min{E K_{n,>=r}, max{r E K_{n,r}, (1+r) E K_{n,1+r}}}."""
    tail = exact_EK_tail_certified(d, n, r)
    tail_up = tail.value + tail.certificate
    inner = max(r * _ek_upper(d, n, r), (1 + r) * _ek_upper(d, n, r + 1))
    return 2.0 * min(tail_up, inner)


def _bbo15(d, n, r, t):
    if d is None:
        raise ValueError("bbo15 needs a distribution")
    if r > n:
        return _inapplicable("bbo15", t, ["need r <= n"])
    if r == 0 and not d.is_finite:
        return _inapplicable("bbo15", t, ["E K_{n,0} is infinite"])
    notes = []
    if r == 0:
        c = exact_EK_certified(d, n, 0)
        k_lo, k_up = c.value - c.certificate, c.value + c.certificate
        notes.append("r = 0: exact E K_{n,0} used for both k bounds")
    elif n == 1:
        c = exact_EK_certified(d, n, r)
        k_lo, k_up = c.value - c.certificate, c.value + c.certificate
        notes.append("n = 1: exact E K_{1,1} used for both k bounds")
    else:
        from .bounds import bound_suite

        rep = bound_suite(d, n - 1, r - 1)
        lo, up = rep.tightest("lower"), rep.tightest("upper")
        k_lo = km_transfer(lo.value, n - 1, r - 1) if lo else 0.0
        k_up = km_transfer(up.value, n - 1, r - 1) if up else math.inf
    v = bbo15_variance_proxy(d, n, r)
    rad = math.sqrt(4.0 * v * t) + 2.0 * t / 3.0
    lower = k_lo - rad
    if lower < 0:
        notes.append("lower endpoint clipped at 0")
        lower = 0.0
    return ProbabilisticInterval(lower, k_up + rad, 1.0 - 4.0 * math.exp(-t), t, "bbo15", notes=notes,
                                 details={"k_lower": k_lo, "k_upper": k_up, "v_upper": v})
