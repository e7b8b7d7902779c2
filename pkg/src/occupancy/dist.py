"""Discrete laws and their structure functions.

A law is a countable family of masses p_a.  Everything downstream looks at it
through the counting function nu(eps) = #{a : p_a >= eps}, which is
left-continuous and constant on (p_{k+1}, p_k], so every supremum or integral
over eps reduces to a finite walk over breakpoints.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .numerics import SlowlyVarying, hurwitz_zeta, riemann_zeta

FAMILIES = ("dirac", "explicit", "uniform", "zipf", "geometric")

_MASS_FLOOR = 1e-300
HORIZON_CAP = 10_000_000


class NoEnvelopeError(ValueError):
    """No regular-variation envelope is known for this law."""


class UnknownLimitError(ValueError):
    """kappa limit requested for a law without a known index."""


@dataclass(frozen=True)
class Distribution:
    family: str
    alpha: Optional[float] = None
    q: Optional[float] = None
    m: Optional[int] = None
    masses: Optional[tuple] = None
    truncation_tol: float = 1e-12
    _z: float = field(default=0.0, repr=False, compare=False)
    _asc: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        fam = self.family
        if fam not in FAMILIES:
            raise ValueError(f"unknown family {fam!r}")
        if not self.truncation_tol > 0:
            raise ValueError("truncation_tol must be positive")
        if fam == "zipf":
            if self.alpha is None or not 0.0 < self.alpha < 1.0:
                raise ValueError("zipf needs 0 < alpha < 1")
            object.__setattr__(self, "_z", riemann_zeta(1.0 / self.alpha))
        elif fam == "geometric":
            if self.q is None or not 0.0 < self.q < 1.0:
                raise ValueError("geometric needs 0 < q < 1")
        else:
            if fam == "dirac":
                ps = np.array([1.0])
            elif fam == "uniform":
                if self.m is None or int(self.m) != self.m or self.m < 1:
                    raise ValueError("uniform needs a positive integer m")
                object.__setattr__(self, "m", int(self.m))
                ps = np.full(self.m, 1.0 / self.m)
            else:
                if not self.masses:
                    raise ValueError("explicit law needs a non-empty mass list")
                ps = np.asarray(self.masses, dtype=float)
                if np.any(~np.isfinite(ps)) or np.any(ps <= 0):
                    raise ValueError("masses must be positive")
                if abs(math.fsum(ps) - 1.0) > 1e-12:
                    raise ValueError("masses must sum to 1 within 1e-12")
                object.__setattr__(self, "masses", tuple(float(p) for p in ps))
            asc = np.sort(ps)
            asc.setflags(write=False)
            object.__setattr__(self, "_asc", asc)

    # -- construction -----------------------------------------------------

    @classmethod
    def dirac(cls, **kw) -> "Distribution":
        return cls("dirac", **kw)

    @classmethod
    def uniform(cls, m: int, **kw) -> "Distribution":
        return cls("uniform", m=m, **kw)

    @classmethod
    def zipf(cls, alpha: float, **kw) -> "Distribution":
        return cls("zipf", alpha=alpha, **kw)

    @classmethod
    def geometric(cls, q: float, **kw) -> "Distribution":
        return cls("geometric", q=q, **kw)

    @classmethod
    def explicit(cls, masses, **kw) -> "Distribution":
        return cls("explicit", masses=tuple(masses), **kw)

    @classmethod
    def from_config(cls, cfg: dict) -> "Distribution":
        cfg = dict(cfg)
        fam = str(cfg.pop("family", "")).lower()
        kw = {}
        if "truncation_tol" in cfg:
            kw["truncation_tol"] = float(cfg.pop("truncation_tol"))
        if fam == "dirac":
            out = cls.dirac(**kw)
        elif fam == "uniform":
            out = cls.uniform(cfg.pop("m"), **kw)
        elif fam == "zipf":
            out = cls.zipf(float(cfg.pop("alpha")), **kw)
        elif fam == "geometric":
            out = cls.geometric(float(cfg.pop("q")), **kw)
        elif fam == "explicit":
            out = cls.explicit(cfg.pop("masses"), **kw)
        else:
            raise ValueError(f"unknown family {fam!r}")
        if cfg:
            raise ValueError(f"unexpected keys {sorted(cfg)}")
        return out

    def to_dict(self) -> dict:
        out = {"family": self.family}
        if self.family == "zipf":
            out["alpha"] = self.alpha
        elif self.family == "geometric":
            out["q"] = self.q
        elif self.family == "uniform":
            out["m"] = self.m
        elif self.family == "explicit":
            out["masses"] = list(self.masses)
        if self.truncation_tol != 1e-12:
            out["truncation_tol"] = self.truncation_tol
        return out

    def label(self) -> str:
        if self.family == "zipf":
            return f"Zipf({self.alpha:g})"
        if self.family == "geometric":
            return f"Geometric({self.q:g})"
        if self.family == "uniform":
            return f"Uniform({self.m})"
        if self.family == "dirac":
            return "Dirac"
        return f"Explicit({len(self.masses)})"

    # -- basic shape ------------------------------------------------------

    @property
    def is_finite(self) -> bool:
        return self._asc is not None

    @property
    def zeta(self) -> float:
        """Normalizer z = zeta(1/alpha) of the Zipf law."""
        return self._z

    def support_size(self) -> float:
        """nu(0) = |S|, +inf for infinite families."""
        return float(len(self._asc)) if self.is_finite else math.inf

    @property
    def p_star(self) -> float:
        if self.is_finite:
            return float(self._asc[-1])
        return float(self.mass(1))

    def mass(self, k):
        """k-th largest mass (1-based) of an infinite family; vectorised."""
        k = np.asarray(k, dtype=float)
        if self.family == "zipf":
            out = np.power(k, -1.0 / self.alpha) / self._z
        elif self.family == "geometric":
            out = (1.0 - self.q) * np.power(self.q, k - 1.0)
        else:
            raise ValueError("mass(k) is for infinite families")
        return float(out) if out.ndim == 0 else out

    def tail_mass(self, k: int) -> float:
        """Sum of all atoms after the k largest ones."""
        if k <= 0:
            return 1.0
        if self.is_finite:
            asc = self._asc
            if k >= len(asc):
                return 0.0
            return math.fsum(asc[: len(asc) - k])
        if self.family == "zipf":
            return hurwitz_zeta(1.0 / self.alpha, k + 1.0) / self._z
        return self.q ** k

    def descending_masses(self, count: int) -> np.ndarray:
        """First `count` masses in non-increasing order (all, if finite)."""
        if self.is_finite:
            return self._asc[::-1][:count].copy()
        return self.mass(np.arange(1, count + 1))

    def horizon_for_mass(self, floor: float) -> int:
        """Number of atoms with mass >= floor (same as nu, named for intent)."""
        return self.nu(floor)

    # -- counting and accrual --------------------------------------------

    def nu(self, eps: float) -> int:
        """#{a : p_a >= eps}, exact."""
        if not eps > 0:
            raise ValueError("nu needs eps > 0; use support_size for eps = 0")
        if self.is_finite:
            return int(len(self._asc) - np.searchsorted(self._asc, eps, side="left"))
        if self.family == "zipf":
            guess = (self._z * eps) ** (-self.alpha)
            k = int(min(math.floor(guess), 4e18)) if math.isfinite(guess) else 4 * 10**18
        else:
            val = math.log(eps / (1.0 - self.q)) / math.log(self.q)
            k = max(0, math.floor(val) + 1) if math.isfinite(val) else 0
        # the closed form can miss by one through rounding; settle it against
        # the masses themselves
        while k > 0 and self.mass(k) < eps:
            k -= 1
        while self.mass(k + 1) >= eps:
            k += 1
        return k

    def nu_above(self, eps: float) -> int:
        """#{a : p_a > eps}, the right limit nu(eps+)."""
        if eps < 0:
            raise ValueError("eps must be >= 0")
        if self.is_finite:
            return int(len(self._asc) - np.searchsorted(self._asc, eps, side="right"))
        if eps == 0:
            raise ValueError("infinite support")
        k = self.nu(eps)
        while k > 0 and self.mass(k) <= eps:
            k -= 1
        return k

    def nu_array(self, eps) -> np.ndarray:
        eps = np.asarray(eps, dtype=float)
        if self.is_finite:
            return len(self._asc) - np.searchsorted(self._asc, eps, side="left")
        if np.any(eps <= 0):
            raise ValueError("nu needs eps > 0")
        if self.family == "zipf":
            with np.errstate(over="ignore"):
                guess = np.power(self._z * eps, -self.alpha)
            k = np.floor(np.minimum(guess, 4e15))
        else:
            val = np.log(eps / (1.0 - self.q)) / math.log(self.q)
            k = np.maximum(0.0, np.floor(val) + 1.0)
        for _ in range(4):
            down = (k > 0) & (self.mass(np.maximum(k, 1.0)) < eps)
            up = self.mass(k + 1.0) >= eps
            if not (down.any() or up.any()):
                break
            k = k - down + up
        return k.astype(np.int64)

    def accrual_F(self, eps: float) -> float:
        """F(eps) = sum of p_a over p_a <= eps."""
        if eps < 0 or eps > 1:
            raise ValueError("accrual_F needs 0 <= eps <= 1")
        if eps == 0:
            return 0.0
        return self.tail_mass(self.nu_above(eps))

    def accrual_F_left(self, eps: float) -> float:
        """F(eps-) = sum of p_a over p_a < eps."""
        if eps <= 0:
            return 0.0
        return self.tail_mass(self.nu(min(eps, 1.0)) if eps <= 1 else self.nu(1.0))

    def nu_integral(self, eps: float) -> float:
        """int_0^eps nu(x) dx = sum_a min(p_a, eps)."""
        if eps <= 0:
            return 0.0
        k = self.nu(eps) if eps <= 1 else 0
        return eps * k + self.tail_mass(k)

    # -- atoms ------------------------------------------------------------

    def atoms_desc(self, limit: int):
        """Distinct masses in decreasing order with multiplicities, and the
        neglected tail mass."""
        if limit < 1:
            raise ValueError("limit must be >= 1")
        if self.is_finite:
            vals, counts = np.unique(self._asc, return_counts=True)
            vals, counts = vals[::-1], counts[::-1]
            atoms = [(float(v), int(c)) for v, c in zip(vals[:limit], counts[:limit])]
            used = sum(c for _, c in atoms)
            return atoms, self.tail_mass(used)
        atoms = []
        k = 0
        tail = 1.0
        # geometric tails are q^k, so the cutoff is closed form; zipf is
        # checked in doubling steps to avoid a zeta call per atom
        if self.family == "geometric":
            need = math.ceil(math.log(self.truncation_tol) / math.log(self.q))
            k = int(min(limit, max(need, 1)))
        else:
            step = 1
            k = 0
            while k < limit:
                nxt = min(limit, k + step)
                if self.tail_mass(nxt) <= self.truncation_tol:
                    lo, hi = k, nxt
                    while hi - lo > 1:
                        mid = (lo + hi) // 2
                        if self.tail_mass(mid) <= self.truncation_tol:
                            hi = mid
                        else:
                            lo = mid
                    k = hi
                    break
                k = nxt
                step *= 2
        ps = self.mass(np.arange(1, k + 1))
        atoms = [(float(p), 1) for p in ps]
        tail = self.tail_mass(k)
        return atoms, tail

    def distinct_atoms(self):
        """(values descending, multiplicities) as arrays; finite laws only."""
        if not self.is_finite:
            raise ValueError("infinite support")
        vals, counts = np.unique(self._asc, return_counts=True)
        return vals[::-1].copy(), counts[::-1].copy()

    # -- kappa ------------------------------------------------------------

    def kappa_table(self, side: str, resolve_to: float) -> "KappaTable":
        return KappaTable(self, side, resolve_to)

    def kappa(self, side: str, eps: float) -> float:
        if not 0 < eps <= 1:
            raise ValueError("kappa needs 0 < eps <= 1")
        return KappaTable(self, side, eps).value(eps)

    def kappa_limit(self, side: str) -> float:
        _check_side(side)
        if self.is_finite:
            return 1.0
        if self.family == "zipf":
            return 2.0 ** self.alpha if side == "plus" else 2.0 ** (-self.alpha)
        # geometric: nu grows like log(1/eps), index 0
        return 1.0

    def L_P(self):
        """sup over 0 < eps < 1 of nu(eps/2) - nu(eps); returns (value, exact)."""
        if self.family == "zipf":
            return math.inf, True
        if self.is_finite:
            vals, _ = self.distinct_atoms()
        else:
            # nu(eps/2) - nu(eps) is periodic in log eps up to rounding, so a
            # few hundred atoms cover many periods
            k = min(400, self.nu(1e-250))
            vals = self.descending_masses(k)
        bps = np.unique(np.concatenate([vals, 2.0 * vals]))
        bps = bps[(bps > 0) & (bps < 1)]
        # the last interval (b_last, 1) is probed at its midpoint
        last = bps[-1] if len(bps) else 0.0
        probes = np.append(bps, 0.5 * (last + 1.0))
        best = 0
        for e in probes:
            best = max(best, self.nu(e / 2.0) - self.nu(e))
        return float(best), True


def _check_side(side: str) -> None:
    if side not in ("plus", "minus"):
        raise ValueError("side must be 'plus' or 'minus'")


def _ratio(num: int, den: int) -> float:
    if den == 0:
        return 1.0 if num == 0 else math.inf
    return num / den


class KappaTable:
    """Running supremum of the kappa ratio over breakpoints.

    Exact above a cutoff u0; on (0, u0] an analytic bound from the family's
    closed-form nu is used, which never underestimates.  `resolve_to` is the
    smallest eps at which the caller wants exact values.
    """

    def __init__(self, dist: Distribution, side: str, resolve_to: float):
        _check_side(side)
        self.dist = dist
        self.side = side
        self.base = 1.0
        self.u0 = 0.0
        if dist.is_finite:
            vals, _ = dist.distinct_atoms()
        else:
            vals, self.u0, self.base = self._infinite_start(min(resolve_to, 1.0))
        bps = np.unique(np.concatenate([vals, 2.0 * vals]))
        bps = bps[bps >= self.u0]
        hi = dist.nu_array(bps).astype(float) if len(bps) else np.zeros(0)
        lo = dist.nu_array(bps / 2.0).astype(float) if len(bps) else np.zeros(0)
        num, den = (lo, hi) if side == "plus" else (hi, lo)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(den > 0, num / np.where(den > 0, den, 1.0),
                              np.where(num > 0, math.inf, 1.0))
        self.breaks = bps
        self.sup = np.maximum.accumulate(np.maximum(ratios, self.base)) if len(bps) else ratios
        # beyond the last breakpoint both counts vanish: ratio 0/0 = 1
        self.tail_value = max(float(self.sup[-1]) if len(bps) else self.base, 1.0)

    def _infinite_start(self, eps):
        d = self.dist
        n_eps = d.nu(eps)
        if d.family == "zipf":
            y0 = max(64.0 * n_eps + 64.0, 2e4)
            k = int(math.ceil(y0))
            u0 = float(d.mass(k))
            y = (d.zeta * u0) ** (-d.alpha)
            if self.side == "plus":
                base = 2.0 ** d.alpha * y / (y - 1.0)
            else:
                base = 1.0 / (2.0 ** d.alpha - 1.0 / y)
        else:
            k_cap = max(1, d.nu(1e-290))
            k = int(min(8 * n_eps + 200, k_cap))
            u0 = float(d.mass(k))
            if self.side == "plus":
                span = math.floor(math.log(2.0) / math.log(1.0 / d.q)) + 1
                base = 1.0 + span / d.nu(u0)
            else:
                base = 1.0
        # atoms down to u0/2 so every 2p >= u0 is a breakpoint
        k_half = d.nu(u0 / 2.0)
        return d.mass(np.arange(1, k_half + 1)), u0, base

    def value(self, v: float) -> float:
        """Upper bound on (and above u0, exactly) sup_{0<u<=v} ratio(u)."""
        if v <= 0:
            raise ValueError("kappa needs v > 0")
        if v <= self.u0:
            return self.base
        i = int(np.searchsorted(self.breaks, v, side="left"))
        if i >= len(self.breaks):
            return self.tail_value
        return float(self.sup[i])

    def values(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        i = np.searchsorted(self.breaks, v, side="left")
        out = np.where(i < len(self.breaks),
                       self.sup[np.minimum(i, len(self.breaks) - 1)] if len(self.breaks) else self.tail_value,
                       self.tail_value)
        return np.where(v <= self.u0, self.base, out)


# ---------------------------------------------------------------------------
# regular-variation envelopes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RVEnvelope:
    alpha: float
    ell: SlowlyVarying
    side: str
    valid_from_epsilon: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.side not in ("upper", "lower", "exact"):
            raise ValueError("side must be upper, lower or exact")
        if not 0.0 < self.valid_from_epsilon <= 1.0:
            raise ValueError("valid_from_epsilon must lie in (0, 1]")

    def __call__(self, eps: float) -> float:
        return eps ** (-self.alpha) * self.ell(1.0 / eps)

    def verify(self, dist: Distribution, points: int = 100, smallest: float = 1e-12) -> None:
        """Spot-check the envelope against nu on a log grid; raise if it fails."""
        top = self.valid_from_epsilon
        lo = min(smallest, top)
        grid = np.geomspace(lo, top, points)
        for e in grid:
            nu = dist.nu(float(e))
            env = self(float(e))
            if self.side == "upper" and nu > env * (1 + 1e-12):
                raise ValueError(f"upper envelope fails at eps={e:g}: nu={nu} > {env:g}")
            if self.side == "lower" and nu < env * (1 - 1e-12):
                raise ValueError(f"lower envelope fails at eps={e:g}: nu={nu} < {env:g}")

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "ell": self.ell.to_dict(), "side": self.side,
                "valid_from_epsilon": self.valid_from_epsilon}


def rv_envelope(dist: Distribution, side: str) -> RVEnvelope:
    """Known envelope eps^-alpha ell(1/eps) for nu, checked before return."""
    if side not in ("upper", "lower"):
        raise ValueError("side must be 'upper' or 'lower'")
    fam = dist.family
    env = None
    if fam == "zipf":
        c = dist.zeta ** (-dist.alpha)
        if side == "upper":
            env = RVEnvelope(dist.alpha, SlowlyVarying("constant", c), "upper", 1.0)
        else:
            cut = 1.0 / (2.0 ** (1.0 / dist.alpha) * dist.zeta)
            env = RVEnvelope(dist.alpha, SlowlyVarying("constant", c / 2.0), "lower", min(cut, 1.0))
    elif fam in ("uniform", "dirac") and side == "upper":
        env = RVEnvelope(0.0, SlowlyVarying("constant", float(dist.support_size())), "upper", 1.0)
    elif fam == "geometric" and side == "upper":
        q = dist.q
        c = 1.0 / math.log(1.0 / q)
        # nu <= c (log(1/eps) + log((1-q)/q)); the second term is <= 0 for
        # q >= 1/2, otherwise it is absorbed since log(e + x) >= 1
        extra = math.log((1.0 - q) / q)
        if extra > 0:
            c *= 1.0 + extra
        env = RVEnvelope(0.0, SlowlyVarying("log_power", c, 1.0), "upper", 1.0)
    if env is None:
        raise NoEnvelopeError(f"no {side} envelope known for {dist.label()}")
    env.verify(dist)
    return env
