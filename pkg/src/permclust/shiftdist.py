"""Distributions ``p`` on ℕ with full support, and what the renewal structure needs from them.

Naming follows the usual conventions: ``cdf(j) = p_1 + ... + p_j`` (0 at
``j = 0``), ``tail(j) = 1 - cdf(j)`` and ``tail_sum(j) = Σ_{i>j} tail(i)``.
"""
from __future__ import annotations

import math
from functools import cached_property
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special


class DistributionError(ValueError):
    pass


class ShiftDistribution:
    """Base class; subclasses are frozen dataclasses with closed-form tails."""

    def pmf(self, j: int) -> float:
        raise NotImplementedError

    def tail(self, j: int) -> float:
        raise NotImplementedError

    def tail_sum(self, j: int) -> float:
        raise NotImplementedError

    def cdf(self, j: int) -> float:
        if j <= 0:
            return 0.0
        return 1.0 - self.tail(j)

    def mean(self) -> float:
        # Σ_j j p_j = Σ_{j>=0} tail(j)
        return 1.0 + self.tail_sum(0)

    def quantile(self, u: float) -> int:
        """Smallest ``j >= 1`` with ``cdf(j) > u``."""
        target = 1.0 - u
        if self.tail(1) < target:
            return 1
        lo, hi = 1, 2
        while self.tail(hi) >= target:
            lo, hi = hi, hi * 2
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.tail(mid) >= target:
                lo = mid
            else:
                hi = mid
        return hi

    def is_non_increasing(self) -> bool:
        raise NotImplementedError

    def cdf_table(self, n: int) -> np.ndarray:
        """``[cdf(0), ..., cdf(n)]`` as float64."""
        return np.array([self.cdf(j) for j in range(n + 1)], dtype=np.float64)

    def pmf_table(self, n: int) -> np.ndarray:
        """``[0, p_1, ..., p_n]``."""
        return np.array([0.0] + [self.pmf(j) for j in range(1, n + 1)], dtype=np.float64)

    def tail_table(self, n: int) -> np.ndarray:
        """``[tail(0), ..., tail(n)]``; ``tail(0) = 1``."""
        return np.array([self.tail(j) for j in range(n + 1)], dtype=np.float64)

    def geometric_tail(self):
        """``(J, ratio)`` when ``tail(j) = tail(J) * ratio**(j - J)`` for all ``j >= J``, else None."""
        return None

    def spec(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class Geometric(ShiftDistribution):
    """``p_j = (1-q) q^{j-1}``; the shift law behind Mallows(q)."""

    q: float

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise DistributionError(f"Geometric needs q in (0, 1), got {self.q}")

    @property
    def _logq(self):
        return math.log(self.q)

    def pmf(self, j):
        return (1.0 - self.q) * self.q ** (j - 1) if j >= 1 else 0.0

    def cdf(self, j):
        return -math.expm1(j * self._logq) if j > 0 else 0.0

    def tail(self, j):
        return self.q ** j if j > 0 else 1.0

    def tail_sum(self, j):
        return self.q ** (j + 1) / (1.0 - self.q)

    def mean(self):
        return 1.0 / (1.0 - self.q)

    def quantile(self, u):
        return int(math.floor(math.log1p(-u) / self._logq)) + 1

    def is_non_increasing(self):
        return True

    def cdf_table(self, n):
        return -np.expm1(np.arange(n + 1, dtype=np.float64) * self._logq)

    def pmf_table(self, n):
        out = (1.0 - self.q) * np.exp(np.arange(-1, n, dtype=np.float64) * self._logq)
        out[0] = 0.0
        return out

    def tail_table(self, n):
        return np.exp(np.arange(n + 1, dtype=np.float64) * self._logq)

    def geometric_tail(self):
        return 0, self.q

    def spec(self):
        return f"geom:q={self.q!r}"


@dataclass(frozen=True)
class FiniteWithGeometricTail(ShiftDistribution):
    """Explicit ``p_1..p_m = weights``; the remaining mass decays with ratio ``r``."""

    weights: tuple
    r: float
    _cum: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        if not w:
            raise DistributionError("FiniteWithGeometricTail needs at least one weight")
        if any(x <= 0 for x in w):
            raise DistributionError("weights must be positive (full support)")
        if not 0.0 < self.r < 1.0:
            raise DistributionError(f"tail ratio r must lie in (0, 1), got {self.r}")
        rest = 1.0 - math.fsum(w)
        if rest <= 0:
            raise DistributionError("weights must sum to less than 1 so the tail has mass")
        object.__setattr__(self, "weights", w)
        # _cum[j] = tail(j) for j = 0..m, summed from the right for accuracy
        tails = [rest]
        for x in reversed(w):
            tails.append(tails[-1] + x)
        object.__setattr__(self, "_cum", tuple(reversed(tails)))

    @property
    def m(self):
        return len(self.weights)

    @property
    def rest(self):
        return self._cum[self.m]

    def pmf(self, j):
        if j < 1:
            return 0.0
        if j <= self.m:
            return self.weights[j - 1]
        return self.rest * (1.0 - self.r) * self.r ** (j - self.m - 1)

    def tail(self, j):
        if j <= 0:
            return 1.0
        if j <= self.m:
            return self._cum[j]
        return self.rest * self.r ** (j - self.m)

    def tail_sum(self, j):
        geo = self.rest / (1.0 - self.r)  # Σ_{i>=m} tail(i)
        if j >= self.m:
            return geo * self.r ** (j + 1 - self.m)
        return math.fsum(self._cum[j + 1:self.m]) + geo

    def is_non_increasing(self):
        seq = list(self.weights) + [self.pmf(self.m + 1)]
        return all(a >= b for a, b in zip(seq, seq[1:]))

    def quantile(self, u):
        if u < self.cdf(self.m):
            return super().quantile(u)
        x = (math.log1p(-u) - math.log(self.rest)) / math.log(self.r)
        return max(self.m + int(math.floor(x)) + 1, self.m + 1)

    def geometric_tail(self):
        return self.m, self.r

    def spec(self):
        return "finitetail:w=" + ",".join(repr(x) for x in self.weights) + f";r={self.r!r}"


@dataclass(frozen=True)
class PowerLaw(ShiftDistribution):
    """``p_j = j^{-s} / ζ(s)`` for ``s > 1``; heavy-tailed, null recurrent when ``s <= 2``."""

    s: float

    def __post_init__(self):
        if not self.s > 1.0:
            raise DistributionError(f"PowerLaw needs s > 1, got {self.s}")

    @cached_property
    def zeta(self):
        return float(special.zeta(self.s, 1.0))

    def pmf(self, j):
        return j ** (-self.s) / self.zeta if j >= 1 else 0.0

    def tail(self, j):
        if j <= 0:
            return 1.0
        return float(special.zeta(self.s, j + 1.0)) / self.zeta

    def tail_sum(self, j):
        if self.s <= 2.0:
            return math.inf
        a = j + 2.0
        # Σ_{i>=j+2} (i-j-1) i^{-s}
        val = float(special.zeta(self.s - 1.0, a)) - (j + 1.0) * float(special.zeta(self.s, a))
        return max(val, 0.0) / self.zeta

    def mean(self):
        if self.s <= 2.0:
            return math.inf
        return float(special.zeta(self.s - 1.0, 1.0)) / self.zeta

    def is_non_increasing(self):
        return True

    def cdf_table(self, n):
        return 1.0 - self.tail_table(n)

    def pmf_table(self, n):
        j = np.arange(n + 1, dtype=np.float64)
        j[0] = 1.0
        out = j ** (-self.s) / self.zeta
        out[0] = 0.0
        return out

    def tail_table(self, n):
        j = np.arange(n + 1, dtype=np.float64)
        out = special.zeta(self.s, j + 1.0) / self.zeta
        out[0] = 1.0
        return out

    def spec(self):
        return f"power:s={self.s!r}"


def parse_distribution(text: str) -> ShiftDistribution:
    """Parse ``geom:q=0.5``, ``finitetail:w=0.5,0.2;r=0.5`` or ``power:s=3``."""
    try:
        family, _, rest = text.strip().partition(":")
        params = {}
        for item in filter(None, rest.split(";")):
            key, _, val = item.partition("=")
            params[key.strip()] = val.strip()
        family = family.strip().lower()
        if family in ("geom", "geometric"):
            return Geometric(float(params["q"]))
        if family in ("finitetail", "finite"):
            w = tuple(float(x) for x in params["w"].split(","))
            return FiniteWithGeometricTail(w, float(params["r"]))
        if family in ("power", "powerlaw"):
            return PowerLaw(float(params["s"]))
    except (KeyError, ValueError) as exc:
        raise DistributionError(f"bad distribution spec {text!r}: {exc}") from exc
    raise DistributionError(f"unknown distribution family in {text!r}")


# Module-level API mirroring the operations on a descriptor.

def pmf(d: ShiftDistribution, j: int) -> float:
    return d.pmf(j)


def cdf(d: ShiftDistribution, j: int) -> float:
    return d.cdf(j)


def truncated_pmf(d: ShiftDistribution, j: int, i: int) -> float:
    """``P(X_j = i) = p_{i+1} / cdf(j)`` for ``i = 0..j-1``."""
    if j < 2:
        raise DistributionError(f"truncation level must be >= 2, got {j}")
    if not 0 <= i <= j - 1:
        raise DistributionError(f"value {i} outside 0..{j - 1}")
    return d.pmf(i + 1) / d.cdf(j)


def truncated_search(table: Sequence[float], j: int, u: float) -> int:
    """Smallest ``i`` in ``0..j-1`` with ``table[i+1] / table[j] > u``."""
    lo, hi = 0, j - 1
    top = table[j]
    while lo < hi:
        mid = (lo + hi) // 2
        if table[mid + 1] / top > u:
            hi = mid
        else:
            lo = mid + 1
    return lo


def truncated_sample(d: ShiftDistribution, j: int, u: float) -> int:
    """Inverse-cdf draw of ``X_j`` from a uniform ``u`` in [0, 1)."""
    if j < 2:
        raise DistributionError(f"truncation level must be >= 2, got {j}")
    return truncated_search(d.cdf_table(j), j, u)


def mean(d: ShiftDistribution) -> float:
    return d.mean()


def is_positive_recurrent(d: ShiftDistribution) -> bool:
    return math.isfinite(d.mean())


def log_renewal_prob(d: ShiftDistribution, n: int) -> float:
    return math.fsum(math.log1p(-d.tail(j)) for j in range(1, n + 1))


def renewal_prob(d: ShiftDistribution, n: int) -> float:
    """``u_n = Π_{j<=n} cdf(j)``, the chance that positions 1..n hold exactly 1..n."""
    if n < 0:
        raise DistributionError("n must be >= 0")
    return math.exp(log_renewal_prob(d, n))


def renewal_sequence(d: ShiftDistribution, nmax: int) -> np.ndarray:
    """``[u_0, ..., u_nmax]``."""
    tails = np.array([d.tail(j) for j in range(1, nmax + 1)])
    logs = np.concatenate([[0.0], np.cumsum(np.log1p(-tails))])
    return np.exp(logs)


def first_renewal_pmf(d: ShiftDistribution, nmax: int) -> np.ndarray:
    """Law of the first renewal ``T_1``: ``[f_1, ..., f_nmax]`` from ``u_n = Σ f_k u_{n-k}``."""
    if nmax < 1:
        raise DistributionError("nmax must be >= 1")
    u = renewal_sequence(d, nmax)
    f = np.zeros(nmax + 1)
    for n in range(1, nmax + 1):
        f[n] = u[n] - math.fsum(f[1:n] * u[n - 1:0:-1])
    return f[1:]
