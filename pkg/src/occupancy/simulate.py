"""Seeded sampling and Monte Carlo checks of occupancy expectations.

Replicate i of master seed s draws from PCG64 seeded by the hash-based
SeedSequence([s, i, stream]), so any replicate can be regenerated on its own
and results do not depend on execution order or worker count.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.special import zeta as _hurwitz

from .dist import Distribution
from .estimate import SampleSummary, concentration_interval

OVERFLOW = -1  # synthetic letter holding the truncated Zipf tail
ZIPF_TAIL_TOL = 1e-12
_HEAD_CAP = 1 << 20
_EXACT_LABELS = 2.0 ** 52  # float labels are exact integers below this


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")

    def rng(self, replicate: int, stream: int = 0) -> np.random.Generator:
        if replicate < 0:
            raise ValueError("replicate must be >= 0")
        ss = np.random.SeedSequence([int(self.master_seed), int(replicate), int(stream)])
        return np.random.Generator(np.random.PCG64(ss))


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------

class AliasTable:
    """Walker's alias method (Vose's construction)."""

    def __init__(self, probs):
        p = np.asarray(probs, dtype=float)
        k = len(p)
        scaled = p * k / p.sum()
        self.prob = np.ones(k)
        self.alias = np.arange(k)
        small = [i for i in range(k) if scaled[i] < 1.0]
        large = [i for i in range(k) if scaled[i] >= 1.0]
        while small and large:
            s, g = small.pop(), large.pop()
            self.prob[s] = scaled[s]
            self.alias[s] = g
            scaled[g] = (scaled[g] + scaled[s]) - 1.0
            (small if scaled[g] < 1.0 else large).append(g)
        # leftovers are 1 up to rounding

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        col = rng.integers(0, len(self.prob), size=size)
        flip = rng.random(size) < self.prob[col]
        return np.where(flip, col, self.alias[col])


class _ZipfSampler:
    """Inverse CDF: a cumulative table for the head, Hurwitz-zeta inversion
    for the tail, and one overflow letter past tail mass ZIPF_TAIL_TOL."""

    def __init__(self, d: Distribution):
        self.d = d
        self.s = 1.0 / d.alpha
        k_max = _tail_horizon(d, ZIPF_TAIL_TOL)
        self.overflow_mass = d.tail_mass(k_max)
        self.k_max = float(k_max)
        k0 = int(min(k_max, _HEAD_CAP))
        self.k0 = k0
        self.cum = np.cumsum(d.mass(np.arange(1, k0 + 1, dtype=float)))
        self.head_mass = 1.0 - d.tail_mass(k0)

    def _tail(self, k):
        return _hurwitz(self.s, np.asarray(k, dtype=float) + 1.0) / self.d.zeta

    def _invert_tail(self, w: np.ndarray) -> np.ndarray:
        """Smallest k with T(k) <= w, T(k) = sum_{j>k} p_j."""
        z, s = self.d.zeta, self.s
        # T(k) = ((k + 1/2)^(1-s)/(s-1) + O(k^(-1-s)))/z, so the inverse is off
        # by at most one step where integers are still resolved
        k = np.ceil(((s - 1.0) * z * w) ** (1.0 / (1.0 - s)) - 0.5)
        k = np.clip(k, self.k0, self.k_max)
        fine = k < _EXACT_LABELS
        kf = k[fine]
        wf = w[fine]
        for _ in range(64):
            up = self._tail(kf) > wf
            down = (kf > self.k0) & (self._tail(kf - 1.0) <= wf)
            if not (up.any() or down.any()):
                break
            kf = kf + up - down
        k[fine] = kf
        return k

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.random(size)
        out = np.searchsorted(self.cum, u, side="right").astype(float) + 1.0
        tail = out > self.k0
        if tail.any():
            # fresh uniforms place tail draws without cancellation
            t0 = 1.0 - self.head_mass
            w = rng.random(int(tail.sum())) * t0
            over = w < self.overflow_mass
            k = np.empty(len(w))
            if (~over).any():
                k[~over] = self._invert_tail(w[~over])
            k[over] = OVERFLOW
            out[tail] = k
        return out


def _tail_horizon(d: Distribution, tol: float) -> int:
    lo, hi = 0, 1
    while d.tail_mass(hi) > tol:
        lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if d.tail_mass(mid) <= tol:
            hi = mid
        else:
            lo = mid
    return hi


@lru_cache(maxsize=32)
def _sampler(d: Distribution):
    if d.is_finite:
        return AliasTable(d.descending_masses(int(d.support_size())))
    if d.family == "zipf":
        return _ZipfSampler(d)
    return None


def draw(d: Distribution, n: int, rng: np.random.Generator) -> np.ndarray:
    """n letters; letter k is the k-th largest atom (1-based).

    Zipf letters are floats: atoms past 2^53 share labels in blocks, which
    only matters for draws of probability below 1e-4 per sample point."""
    if d.family == "geometric":
        u = rng.random(n)
        # P(X > k) = q^k
        return 1 + np.floor(np.log1p(-u) / math.log(d.q)).astype(np.int64)
    smp = _sampler(d)
    if d.is_finite:
        return smp.draw(rng, n).astype(np.int64) + 1
    return smp.draw(rng, n)


def letter_masses(d: Distribution, letters) -> np.ndarray:
    if d.is_finite:
        letters = np.asarray(letters, dtype=np.int64)
        return d.descending_masses(int(d.support_size()))[letters - 1]
    letters = np.asarray(letters, dtype=float)
    out = np.empty(len(letters))
    over = letters == OVERFLOW
    out[~over] = d.mass(letters[~over])
    if over.any():
        out[over] = _sampler(d).overflow_mass
    return out


def summarize(letters: np.ndarray) -> SampleSummary:
    vals, counts = np.unique(letters, return_counts=True)
    return SampleSummary.from_arrays(vals, counts)


def sample_counts(d: Distribution, n: int, seed: SeedSpec, replicate: int) -> SampleSummary:
    if n < 1:
        raise ValueError("n must be >= 1")
    return summarize(draw(d, n, seed.rng(replicate)))


def realized_KM(d: Distribution, summary: SampleSummary, r: int):
    """(K_{n,r}, M_{n,r}); M_{n,0} is one minus the seen mass."""
    if r < 0:
        raise ValueError("r must be >= 0")
    masses = letter_masses(d, summary.letters)
    counts = np.asarray(summary.counts)
    if r == 0:
        seen = len(summary.letters)
        k = d.support_size() - seen
        return (int(k) if math.isfinite(k) else math.inf), 1.0 - math.fsum(masses)
    pick = counts == r
    return int(pick.sum()), math.fsum(masses[pick])


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

@dataclass
class MonteCarloResult:
    dist: dict
    n: int
    N: int
    rows: dict = field(default_factory=dict)  # r -> dict of mean/se
    coverage_fraction: Optional[float] = None
    interval: Optional[dict] = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"dist": self.dist, "n": self.n, "N": self.N,
                "rows": {str(r): v for r, v in sorted(self.rows.items())},
                "coverage_fraction": self.coverage_fraction, "interval": self.interval,
                "notes": list(self.notes)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_csv(self, exact: Optional[dict] = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dist", "n", "r", "N", "mean_K", "se_K", "mean_M", "se_M", "exact_EM", "z_score"])
        label = json.dumps(self.dist, sort_keys=True)
        for r, row in sorted(self.rows.items()):
            ex = exact.get(r) if exact else None
            z = ""
            if ex is not None:
                z = _fmt((row["mean_M"] - ex) / row["se_M"]) if row["se_M"] > 0 else _fmt(0.0 if row["mean_M"] == ex else math.inf)
            w.writerow([label, self.n, r, self.N, _fmt(row["mean_K"]), _fmt(row["se_K"]),
                        _fmt(row["mean_M"]), _fmt(row["se_M"]), "" if ex is None else _fmt(ex), z])
        return buf.getvalue()


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _replicate_block(d, n, r_list, seed, start, stop):
    out = np.empty((stop - start, len(r_list), 2))
    for i in range(start, stop):
        summ = sample_counts(d, n, seed, i)
        for j, r in enumerate(r_list):
            k, m = realized_KM(d, summ, r)
            out[i - start, j] = (k, m)
    return out


def _run_blocks(fn, args, N, jobs):
    """Evaluate replicates 0..N-1 in index-ordered blocks."""
    size = max(1, -(-N // max(1, 4 * jobs)))
    bounds = [(a, min(N, a + size)) for a in range(0, N, size)]
    if jobs <= 1:
        parts = [fn(*args, a, b) for a, b in bounds]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            futs = [ex.submit(fn, *args, a, b) for a, b in bounds]
            parts = [f.result() for f in futs]
    return np.concatenate(parts, axis=0)


def _mean_se(x: np.ndarray):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        return float(np.mean(x)), math.nan
    mean = math.fsum(x) / len(x)
    var = math.fsum((x - mean) ** 2) / (len(x) - 1)
    return mean, math.sqrt(var / len(x))


def monte_carlo(d: Distribution, n: int, r_set, N: int, seed: SeedSpec, jobs: int = 1) -> MonteCarloResult:
    if N < 2:
        raise ValueError("N must be >= 2")
    r_list = sorted(set(int(r) for r in r_set))
    vals = _run_blocks(_replicate_block, (d, n, r_list, seed), N, jobs)
    res = MonteCarloResult(d.to_dict(), n, N)
    for j, r in enumerate(r_list):
        mk, sk = _mean_se(vals[:, j, 0])
        mm, sm = _mean_se(vals[:, j, 1])
        res.rows[r] = {"mean_K": mk, "se_K": sk, "mean_M": mm, "se_M": sm}
    if d.family == "zipf":
        smp = _sampler(d)
        res.notes.append(f"zipf tail past atom {smp.k_max} merged into one letter of mass "
                         f"{smp.overflow_mass:.3g}; expected overflow draws per sample {n * smp.overflow_mass:.3g}")
    return res


def _m0_block(d, n, seed, start, stop):
    out = np.empty(stop - start)
    for i in range(start, stop):
        out[i - start] = realized_KM(d, sample_counts(d, n, seed, i), 0)[1]
    return out


def coverage_experiment(d: Distribution, n: int, t: float, N: int, seed: SeedSpec,
                        interval_kind: str = "cbmm3", jobs: int = 1, interval=None) -> MonteCarloResult:
    """Fraction of replicates whose realized M_{n,0} lies in the interval."""
    iv = interval if interval is not None else concentration_interval(interval_kind, d, n, 0, t)
    if not iv.applicable:
        raise ValueError(f"interval {iv.source} is inapplicable: {iv.notes}")
    m0 = _run_blocks(_m0_block, (d, n, seed), N, jobs)
    inside = (m0 >= iv.lower) & (m0 <= iv.upper)
    res = MonteCarloResult(d.to_dict(), n, N)
    mm, sm = _mean_se(m0)
    res.rows[0] = {"mean_K": math.nan, "se_K": math.nan, "mean_M": mm, "se_M": sm}
    res.coverage_fraction = float(inside.mean())
    res.interval = iv.to_dict()
    return res
