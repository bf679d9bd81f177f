"""Closed forms, certified finite-n bounds, limits and constants for cluster events.

Products with many factors are taken in log space.  Sums over the
alignment index ``a`` are vectorized and combined with ``math.fsum``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate

from .permcore import ClusterQuery, PermutationError
from .shiftdist import DistributionError, Geometric, ShiftDistribution

LIMIT_LOG_TOL = 1e-10


class BoundNotCertifiedError(ValueError):
    """The requested bound needs a hypothesis the distribution does not satisfy."""


def _as_dist(d) -> ShiftDistribution:
    if isinstance(d, ShiftDistribution):
        return d
    return Geometric(float(d))


def _check_query(n: int, l: int, k: int):
    ClusterQuery(n, l, k)


# --------------------------------------------------------------------------
# uniform baselines

def uniform_cluster_prob(n: int, l: int) -> float:
    """``(n-l+1)·l!(n-l)!/n!``, evaluated exactly as ``(n-l+1)/C(n, l)``."""
    if not 2 <= l <= n:
        raise PermutationError(f"need 2 <= l <= n, got l={l}, n={n}")
    return float(Fraction(n - l + 1, math.comb(n, l)))


def uniform_expected_Nl(n: int, l: int) -> float:
    """``E N_l = (n-l+1)²·l!(n-l)!/n!`` under the uniform law."""
    if not 2 <= l <= n:
        raise PermutationError(f"need 2 <= l <= n, got l={l}, n={n}")
    return float(Fraction((n - l + 1) ** 2, math.comb(n, l)))


def uniform_any_cluster_asympt(n: int, l: int) -> float:
    """Reference value ``l!/n^{l-2}`` for the chance that some block of length ``l`` clusters."""
    if l < 3:
        raise PermutationError("the asymptotic reference needs l >= 3")
    if n < l:
        raise PermutationError(f"need n >= l, got n={n}, l={l}")
    return math.exp(math.lgamma(l + 1) - (l - 2) * math.log(n))


# --------------------------------------------------------------------------
# finite-n bounds for general p

def _log_cdf(d: ShiftDistribution, n: int) -> np.ndarray:
    """``[0, log N_1, ..., log N_n]``; slot 0 is a placeholder."""
    out = np.zeros(n + 1)
    out[1:] = np.log(d.cdf_table(n)[1:])
    return out


def _log_block_alignment(d: ShiftDistribution, l: int, k: int) -> np.ndarray:
    """``log P(B_{l;k;a})`` for ``a = 0..k-1``."""
    p = d.pmf_table(k + l)
    logN = _log_cdf(d, k + l)
    denom = float(np.sum(logN[k:k + l]))
    out = np.empty(k)
    step = max(1, 2_000_000 // l)
    for a0 in range(0, k, step):
        a = np.arange(a0, min(k, a0 + step))
        # N_{a+j+1} - N_a = p_{a+1} + ... + p_{a+j+1}, summed from positive terms
        cols = a[:, None] + 1 + np.arange(l)[None, :]
        diffs = np.cumsum(p[cols], axis=1)
        out[a] = np.log(diffs).sum(axis=1) - denom
    return out


def block_alignment_prob(d, l: int, k: int, a: int) -> float:
    """``P(B_{l;k;a}) = Π_{j<l} (N_{a+j+1} - N_a)/N_{k+j}``."""
    if l < 2 or k < 1 or not 0 <= a <= k - 1:
        raise PermutationError(f"need l >= 2, k >= 1 and 0 <= a <= k-1; got l={l}, k={k}, a={a}")
    return float(math.exp(_log_block_alignment(_as_dist(d), l, k)[a]))


def _log_prefix(values: np.ndarray) -> np.ndarray:
    """``out[m] = Σ_{t<=m} values[t]`` with ``out[0] = 0`` (``values[0]`` ignored)."""
    out = np.zeros(values.shape[0])
    out[1:] = np.cumsum(values[1:])
    return out


def cluster_lower_bound(d, n: int, l: int, k: int) -> float:
    """Alignment followed by every later number landing right of the block.

    ``Σ_a P(B_{l;k;a}) · Π_{j=0}^{n-k-l} N_{a+j+1}/N_{k+l+j}``.
    """
    d = _as_dist(d)
    _check_query(n, l, k)
    logB = _log_block_alignment(d, l, k)
    L = _log_prefix(_log_cdf(d, n))
    a = np.arange(k)
    m = n - k - l + 1  # number of factors
    log_tail = (L[a + m] - L[a]) - (L[n] - L[k + l - 1])
    return math.fsum(np.exp(logB + log_tail).tolist())


def cluster_upper_bound(d, n: int, l: int, k: int) -> float:
    """Alignment followed by no later number splitting the block.

    ``Σ_a P(B_{l;k;a}) · Π_{j=1}^{n-k-l+1} (1 - N_{a+j+l-1} + N_{a+j})``;
    certified only for non-increasing ``p``.
    """
    d = _as_dist(d)
    _check_query(n, l, k)
    if not d.is_non_increasing():
        raise BoundNotCertifiedError(
            f"upper bound requires non-increasing p_1 >= p_2 >= ...; {d.spec()} is not")
    logB = _log_block_alignment(d, l, k)
    m = n - k - l + 1
    top = k - 1 + m + l - 1
    p = d.pmf_table(top + 1)
    # window[t] = N_{t+l-1} - N_t = p_{t+1} + ... + p_{t+l-1}
    csum = np.concatenate([[0.0], np.cumsum(p[1:])])
    t = np.arange(top - l + 2)
    window = csum[t + l - 1] - csum[t]
    window = np.clip(window, 0.0, 1.0)
    W = _log_prefix(np.log1p(-window))
    a = np.arange(k)
    log_tail = W[a + m] - W[a]
    return math.fsum(np.exp(logB + log_tail).tolist())


# --------------------------------------------------------------------------
# Mallows lower bound

def _log_1m_q(x, lq):
    """``log(1 - q^x)`` for ``x > 0``."""
    return np.log(-np.expm1(np.asarray(x, dtype=np.float64) * lq))


def mallows_first_block_law(k: int, l: int, q: float) -> np.ndarray:
    """``P(C_j)`` for ``j = 0..k-1``: ``Π_{i<=j} r_{k-i,l} · (1 - r_{k-j-1,l})``.

    In the sequential construction, ``C_j`` is the event that exactly ``j``
    of ``1..k-1`` appear before the first value of the block ``k..k+l-1``;
    the ``C_j`` partition the space.
    """
    if not 0.0 < q < 1.0:
        raise DistributionError(f"q must lie in (0, 1), got {q}")
    lq = math.log(q)
    i = np.arange(1, k)
    log_r = _log_1m_q(k - i, lq) - _log_1m_q(k - i + l, lq)
    cum = np.concatenate([[0.0], np.cumsum(log_r)])  # cum[j] = Σ_{i<=j}
    aa = k - np.arange(k) - 1
    # log(1 - r_{a,l}) = a log q + log(1 - q^l) - log(1 - q^{a+l}); zero at a = 0
    log_1mr = aa * lq + _log_1m_q(l, lq) - _log_1m_q(aa + l, lq)
    return np.exp(cum + log_1mr)


def mallows_cluster_lower_bound(n: int, l: int, k: int, q: float) -> float:
    """Condition on how many of ``1..k-1`` precede the block in the sequential construction.

    ``Σ_j P(C_j) · Π_{i=1}^{l-1} (1 - r_{k-1-j, i, n-k-l+1})`` with
    ``r_{a,b} = (1-q^a)/(1-q^{a+b})`` and
    ``1 - r_{a,b,c} = (q^a - q^{a+b})/(1 - q^{a+b+c})``.
    """
    if not 0.0 < q < 1.0:
        raise DistributionError(f"q must lie in (0, 1), got {q}")
    _check_query(n, l, k)
    lq = math.log(q)
    c = n - k - l + 1
    log_C = np.log(mallows_first_block_law(k, l, q))
    aa = k - np.arange(k) - 1
    b = np.arange(1, l)
    step = max(1, 2_000_000 // max(l - 1, 1))
    log_inner = np.empty(k)
    for j0 in range(0, k, step):
        a = aa[j0:j0 + step, None]
        val = a * lq + _log_1m_q(b[None, :], lq) - _log_1m_q(a + b[None, :] + c, lq)
        log_inner[j0:j0 + step] = val.sum(axis=1)
    return math.fsum(np.exp(log_C + log_inner).tolist())


# --------------------------------------------------------------------------
# infinite products

@dataclass(frozen=True)
class LogProduct:
    """``log Π_{j>=1} N_j`` with a certified bound on the truncation error."""

    value: float
    error_bound: float
    terms: int


def log_renewal_limit(d, tol: float = LIMIT_LOG_TOL) -> LogProduct:
    """``log Π_{j>=1} (1 - R_j)`` truncated at ``J`` with the first-order tail ``-Σ_{j>J} R_j`` added.

    Since ``-log(1-x) - x <= x²/(2(1-x))`` and ``R_j`` decreases, the residual is at
    most ``R_{J+1} · Σ_{j>J} R_j / (2 N_{J+1})``; ``J`` doubles until that is ``<= tol``.
    """
    d = _as_dist(d)
    if not math.isfinite(d.mean()):
        return LogProduct(-math.inf, 0.0, 0)
    J = 64
    while True:
        rj = d.tail(J + 1)
        sj = d.tail_sum(J)
        bound = rj * sj / (2.0 * (1.0 - rj))
        if bound <= tol or J >= 1 << 26:
            break
        J *= 2
    tails = d.tail_table(J)[1:]
    value = math.fsum(np.log1p(-tails).tolist()) - sj
    return LogProduct(value, bound, J)


def supercluster_limit(d, k: Union[int, str] = "interior") -> float:
    """Double limit of the cluster probability as ``n → ∞`` then ``l → ∞``.

    Fixed ``k``: ``Π_{j<k} N_j · Π_{j>=1} N_j``.  ``k = "interior"`` (both
    ``k_n`` and ``n - k_n`` unbounded): ``(Π_{j>=1} N_j)²``.  Zero when the mean
    of ``p`` is infinite.
    """
    d = _as_dist(d)
    lp = log_renewal_limit(d)
    if lp.value == -math.inf:
        return 0.0
    if k == "interior":
        return math.exp(2.0 * lp.value)
    k = int(k)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    head = math.fsum(_log_cdf(d, k - 1)[1:].tolist()) if k > 1 else 0.0
    return math.exp(head + lp.value)


def euler_product(q: float) -> float:
    """``Π_{j>=1} (1 - q^j)``."""
    if not 0.0 < q < 1.0:
        raise DistributionError(f"q must lie in (0, 1), got {q}")
    return math.exp(log_renewal_limit(Geometric(q)).value)


def log_euler_product(q: float) -> float:
    if not 0.0 < q < 1.0:
        raise DistributionError(f"q must lie in (0, 1), got {q}")
    return log_renewal_limit(Geometric(q)).value


def asymptote(q: float) -> float:
    """``exp(-π²/(6(1-q)))``, the leading behaviour of the Euler product as ``q → 1``."""
    if not 0.0 < q < 1.0:
        raise DistributionError(f"q must lie in (0, 1), got {q}")
    return math.exp(-math.pi ** 2 / (6.0 * (1.0 - q)))


# --------------------------------------------------------------------------
# constants

def quad(f, a: float, b: float, abs_tol: float = 1e-12) -> Tuple[float, float]:
    """Adaptive Gauss-Kronrod integration with an absolute error budget."""
    val, err = integrate.quad(f, a, b, epsabs=abs_tol, epsrel=0.0, limit=200)
    return float(val), float(err)


def kminus(l: int) -> Tuple[float, float]:
    """``(((l-1)!)²/(2l)!, Beta(l, l))``, the two lower-constant conventions."""
    if l < 2:
        raise ValueError("l must be >= 2")
    f = math.factorial(l - 1) ** 2
    return float(Fraction(f, math.factorial(2 * l))), float(Fraction(f, math.factorial(2 * l - 1)))


def kminus_conservative(l: int) -> float:
    return min(kminus(l))


def kplus(l: int) -> float:
    """``∫_0^1 x^{l-1} e^{-(l-1)x} dx`` in closed form.

    Equals ``(l-1)!/(l-1)^l · P(Poisson(l-1) >= l)``.
    """
    if l < 2:
        raise ValueError("l must be >= 2")
    x = float(l - 1)
    head = math.fsum(math.exp(i * math.log(x) - math.lgamma(i + 1) - x) for i in range(l))
    return math.exp(math.lgamma(l) - l * math.log(x)) * (1.0 - head)


def kplus_quadrature(l: int, abs_tol: float = 1e-12) -> float:
    if l < 2:
        raise ValueError("l must be >= 2")
    return quad(lambda x: x ** (l - 1) * math.exp(-(l - 1) * x), 0.0, 1.0, abs_tol)[0]


def gamma_cd(c: float, d: float) -> float:
    """``log((1 - e^{-cd})/(1 - e^{-c}))``; negative for ``d < 1``."""
    _check_cd(c, d)
    return math.log(-math.expm1(-c * d)) - math.log(-math.expm1(-c))


def _check_cd(c, d):
    if not c > 0:
        raise ValueError(f"c must be positive, got {c}")
    if not 0.0 < d < 1.0:
        raise ValueError(f"d must lie in (0, 1), got {d}")


def alpha1_upper_coeff(c: float, d: float, l: int, abs_tol: float = 1e-10) -> float:
    """``c^{l-1} (1-e^{-cd})^{-l} ∫_{e^{-cd}}^1 y^{l-1} exp(γ(c,d) e^{cd} (l-1) y) dy``.

    The integral is taken after mapping ``[e^{-cd}, 1]`` onto ``[0, 1]``, which
    absorbs one power of ``1 - e^{-cd}`` and keeps the integrand of order one.
    """
    _check_cd(c, d)
    if l < 2:
        raise ValueError("l must be >= 2")
    g = gamma_cd(c, d)
    w = -math.expm1(-c * d)
    lo = math.exp(-c * d)
    rate = g * math.exp(c * d) * (l - 1)

    def f(t):
        y = lo + w * t
        return y ** (l - 1) * math.exp(rate * y)

    integral = quad(f, 0.0, 1.0, abs_tol)[0]
    return math.exp((l - 1) * math.log(c) - (l - 1) * math.log(w)) * integral


# --------------------------------------------------------------------------
# scaling envelopes

@dataclass(frozen=True)
class ScalingGrid:
    """``q_n = 1 - c/n^α`` over ``n_values``, block start ``k_n`` from ``d·n`` or explicit values."""

    alpha: float
    c: float
    l: int
    n_values: tuple
    d: Optional[float] = 0.5
    k_values: Optional[tuple] = None

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if self.l < 2:
            raise ValueError("l must be >= 2")
        ns = tuple(int(n) for n in self.n_values)
        if not ns or any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("n_values must be a non-empty increasing sequence")
        object.__setattr__(self, "n_values", ns)
        if self.k_values is not None:
            ks = tuple(int(k) for k in self.k_values)
            if len(ks) != len(ns):
                raise ValueError("k_values must match n_values in length")
            object.__setattr__(self, "k_values", ks)
        elif self.d is None or not 0.0 < self.d < 1.0:
            raise ValueError("either k_values or d in (0, 1) is required")
        for n, k in zip(ns, self.ks()):
            q = self.q(n)
            if not 0.0 < q < 1.0:
                raise ValueError(f"q_n = {q} outside (0, 1) at n={n}")
            ClusterQuery(n, self.l, k)

    def q(self, n: int) -> float:
        return 1.0 - self.c / n ** self.alpha

    def ks(self) -> tuple:
        if self.k_values is not None:
            return self.k_values
        return tuple(max(1, int(round(self.d * n))) for n in self.n_values)

    def scale(self, n: int) -> float:
        """``n^{α(l-1)}``, the normalization that makes the cluster probability order one."""
        return n ** (self.alpha * (self.l - 1))


@dataclass(frozen=True)
class EnvelopeRow:
    n: int
    q: float
    k: int
    lower: float
    upper_general: float
    upper_improved: float


def theorem1_envelope(grid: ScalingGrid) -> List[EnvelopeRow]:
    """Predicted band for the cluster probability under ``q_n = 1 - c/n^α``.

    The lower constant is the smaller of the two conventions in ``kminus``.
    """
    l = grid.l
    lo_k = kminus_conservative(l)
    hi_k = kplus(l)
    rows = []
    for n, k in zip(grid.n_values, grid.ks()):
        base = grid.c ** (l - 1) * math.factorial(l) / grid.scale(n)
        rows.append(EnvelopeRow(n, grid.q(n), k, lo_k * base, base / l, hi_k * base))
    return rows


# --------------------------------------------------------------------------
# reports

@dataclass(frozen=True)
class BoundsReport:
    query: ClusterQuery
    measure: str
    lower: float
    upper: Optional[float] = None
    exact: Optional[float] = None
    mallows_lower: Optional[float] = None
    notes: tuple = field(default_factory=tuple)

    def __post_init__(self):
        slack = 1e-12
        if self.upper is not None and self.lower > self.upper + slack:
            raise ValueError(f"lower {self.lower} exceeds upper {self.upper}")


def bounds_report(d, query: ClusterQuery, exact: Optional[float] = None) -> BoundsReport:
    """Certified lower and (when applicable) upper bound for one query."""
    d = _as_dist(d)
    if query.pattern is not None:
        raise ValueError("the bounds cover unpatterned cluster events only")
    n, l, k = query.n, query.l, query.k
    notes = []
    lower = cluster_lower_bound(d, n, l, k)
    upper = None
    if d.is_non_increasing():
        upper = cluster_upper_bound(d, n, l, k)
    else:
        notes.append("upper bound requires non-increasing p; omitted")
    mallows = None
    if isinstance(d, Geometric):
        mallows = mallows_cluster_lower_bound(n, l, k, d.q)
    return BoundsReport(query, d.spec(), lower, upper, exact, mallows, tuple(notes))
