"""Closed-form pmfs and a brute-force enumeration oracle over ``S_n``.

The oracle walks ``S_n`` in lexicographic order, one block of
``min(n, 7)!`` permutations at a time: every block shares its leading
symbols, and the trailing symbols run through a precomputed table.  Block
sums are combined with ``math.fsum`` in block order, so results do not depend
on how blocks are spread over workers.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Tuple, Union

import numpy as np

from .permcore import ClusterQuery, Permutation, PermutationError, backward_ranks, inversions
from .shiftdist import DistributionError, ShiftDistribution

DEFAULT_CAP = 10
HARD_CAP = 12
_TAIL = 7

Measure = Union[float, ShiftDistribution, str]


class EnumerationCapError(ValueError):
    """Raised when an enumeration would exceed the configured size cap."""


@dataclass(frozen=True)
class ExactEventResult:
    probability: float
    n: int
    support_size: int
    method: str  # "enumeration" or "closed-form"


# --------------------------------------------------------------------------
# closed forms

def _check_q(q: float):
    if not q > 0:
        raise DistributionError(f"Mallows parameter must be positive, got {q}")


def log_mallows_normalizer(n: int, q: float) -> float:
    _check_q(q)
    if q == 1.0:
        return math.lgamma(n + 1)
    # (1 - q^k) / (1 - q) = 1 + q + ... + q^{k-1}
    lq = math.log(q)
    return math.fsum(math.log(math.expm1(k * lq) / math.expm1(lq)) for k in range(1, n + 1))


def mallows_normalizer(n: int, q: float) -> float:
    """``Z_n(q) = Π_{k=1}^n (1-q^k)/(1-q)``; ``n!`` at ``q = 1``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    _check_q(q)
    if q == 1.0:
        return float(math.factorial(n))
    return math.exp(log_mallows_normalizer(n, q))


def mallows_pmf(p, q: float) -> float:
    p = p if isinstance(p, Permutation) else Permutation(tuple(p))
    _check_q(q)
    n = len(p)
    if q == 1.0:
        return 1.0 / math.factorial(n)
    return math.exp(inversions(p) * math.log(q) - log_mallows_normalizer(n, q))


def pshifted_pmf(p, d: ShiftDistribution) -> float:
    """Product over ``j = 2..n`` of ``P(X_j = I_{<j}(p))``."""
    p = p if isinstance(p, Permutation) else Permutation(tuple(p))
    out = 1.0
    for j, r in enumerate(backward_ranks(p), start=2):
        out *= d.pmf(r + 1) / d.cdf(j)
    return out


# --------------------------------------------------------------------------
# enumeration

def _check_cap(n: int, cap_override: bool):
    if n < 1:
        raise ValueError("n must be >= 1")
    cap = HARD_CAP if cap_override else DEFAULT_CAP
    if n > cap:
        hint = "" if cap_override else f" (up to {HARD_CAP} with the cap override)"
        raise EnumerationCapError(f"refusing to enumerate S_{n}: cap is n <= {cap}{hint}")


def _weight_fn(n: int, measure: Measure) -> Tuple[Callable, str]:
    """Map a block of permutations to its pmf values."""
    if isinstance(measure, str):
        if measure != "uniform":
            raise ValueError(f"unknown measure {measure!r}")
        measure = 1.0
    if isinstance(measure, ShiftDistribution):
        # table[j, i] = P(X_j = i)
        table = np.zeros((n + 1, n))
        for j in range(2, n + 1):
            top = measure.cdf(j)
            table[j, :j] = [measure.pmf(i + 1) / top for i in range(j)]

        def weights(ranks, inv):
            w = np.ones(ranks.shape[0])
            for j in range(2, n + 1):
                w *= table[j, ranks[:, j - 1]]
            return w

        return weights, "pshifted"
    q = float(measure)
    _check_q(q)
    if q == 1.0:
        inv_fact = 1.0 / math.factorial(n)
        return (lambda ranks, inv: np.full(ranks.shape[0], inv_fact)), "uniform"
    logz = log_mallows_normalizer(n, q)
    lq = math.log(q)
    return (lambda ranks, inv: np.exp(inv * lq - logz)), "mallows"


@dataclass
class _Block:
    perms: np.ndarray    # (B, n) one-line values 1..n
    pos: np.ndarray      # (B, n+1) 0-based positions, column 0 unused
    ranks: np.ndarray    # (B, n) ranks[:, j-1] = I_{<j}
    weights: np.ndarray  # (B,) pmf values


def _tail_table(m: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(m))), dtype=np.int64).reshape(-1, m)


def _build_block(prefix, rest, table, n, weight_fn) -> _Block:
    B = table.shape[0]
    perms = np.empty((B, n), dtype=np.int64)
    h = len(prefix)
    perms[:, :h] = prefix
    perms[:, h:] = np.asarray(rest, dtype=np.int64)[table]
    pos = np.empty((B, n + 1), dtype=np.int64)
    pos[:, 0] = -1
    rows = np.arange(B)[:, None]
    pos[rows, perms] = np.arange(n)[None, :]
    ranks = np.zeros((B, n), dtype=np.int64)
    for v in range(2, n + 1):
        ranks[:, v - 1] = (pos[:, 1:v] > pos[:, v:v + 1]).sum(axis=1)
    inv = ranks.sum(axis=1)
    return _Block(perms, pos, ranks, weight_fn(ranks, inv))


def _blocks(n: int, measure: Measure, cap_override: bool = False) -> Iterator[_Block]:
    _check_cap(n, cap_override)
    weight_fn, _ = _weight_fn(n, measure)
    m = min(n, _TAIL)
    table = _tail_table(m)
    values = list(range(1, n + 1))
    for prefix in itertools.permutations(values, n - m):
        used = set(prefix)
        rest = [v for v in values if v not in used]
        yield _build_block(np.array(prefix, dtype=np.int64), rest, table, n, weight_fn)


def _reduce_blocks(n, measure, fn, cap_override=False, workers=1):
    """``[fn(block) for block in S_n]`` in lexicographic block order."""
    if workers <= 1:
        return [fn(b) for b in _blocks(n, measure, cap_override)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, _blocks(n, measure, cap_override)))


def _cluster_mask(block: _Block, q: ClusterQuery) -> np.ndarray:
    seg = block.pos[:, q.k:q.k + q.l]
    lo = seg.min(axis=1)
    ok = seg.max(axis=1) - lo == q.l - 1
    if q.pattern is not None:
        want = np.asarray(q.pattern.values, dtype=np.int64) + (q.k - 1)
        idx = lo[:, None] + np.arange(q.l)[None, :]
        got = np.take_along_axis(block.perms, np.minimum(idx, block.perms.shape[1] - 1), axis=1)
        ok &= (got == want).all(axis=1)
    return ok


def _event_mask(event, block: _Block, vectorized: bool) -> np.ndarray:
    if isinstance(event, ClusterQuery):
        return _cluster_mask(block, event)
    if vectorized:
        return np.asarray(event(block.perms), dtype=bool)
    return np.fromiter((bool(event(Permutation(tuple(row)))) for row in block.perms),
                       dtype=bool, count=block.perms.shape[0])


def exact_event_prob(n: int, measure: Measure, event, cap_override: bool = False,
                     vectorized: bool = False, workers: int = 1) -> ExactEventResult:
    """Sum ``pmf(σ)·1{event(σ)}`` over all of ``S_n``.

    ``event`` is a ``ClusterQuery`` or a predicate on ``Permutation``; with
    ``vectorized=True`` the predicate instead receives a ``(B, n)`` array of
    one-line rows and returns a boolean mask.
    """
    if isinstance(event, ClusterQuery) and event.n != n:
        raise PermutationError(f"query is for S_{event.n}, enumerating S_{n}")
    parts = _reduce_blocks(
        n, measure, lambda b: float(b.weights[_event_mask(event, b, vectorized)].sum()),
        cap_override, workers)
    prob = min(max(math.fsum(parts), 0.0), 1.0)
    return ExactEventResult(prob, n, math.factorial(n), "enumeration")


def exact_cluster_prob(n: int, measure: Measure, query: ClusterQuery,
                       cap_override: bool = False, workers: int = 1) -> float:
    return exact_event_prob(n, measure, query, cap_override, workers=workers).probability


def exact_total_mass(n: int, measure: Measure, cap_override: bool = False) -> float:
    """``Σ_σ pmf(σ)`` by enumeration; 1 up to rounding."""
    return math.fsum(_reduce_blocks(n, measure, lambda b: float(b.weights.sum()), cap_override))


def _nl_counts(block: _Block, l: int) -> np.ndarray:
    n = block.perms.shape[1]
    count = np.zeros(block.perms.shape[0], dtype=np.int64)
    for k in range(1, n - l + 2):
        count += _cluster_mask(block, ClusterQuery(n, l, k))
    return count


def _law(n, measure, values_fn, cap_override):
    def part(block):
        keys, inv = np.unique(values_fn(block), return_inverse=True)
        return keys, np.bincount(inv, weights=block.weights)

    acc: dict = {}
    for keys, sums in _reduce_blocks(n, measure, part, cap_override):
        for k, s in zip(keys.tolist(), sums.tolist()):
            acc.setdefault(k, []).append(s)
    return {k: math.fsum(v) for k, v in sorted(acc.items())}


def exact_distribution(n: int, measure: Measure, statistic: Callable,
                       cap_override: bool = False) -> dict:
    """Law of an integer statistic; ``statistic`` maps a ``(B, n)`` array to ``B`` integers."""
    return _law(n, measure, lambda b: np.asarray(statistic(b.perms), dtype=np.int64), cap_override)


def exact_expectation(n: int, measure: Measure, statistic: Callable,
                      cap_override: bool = False) -> float:
    law = exact_distribution(n, measure, statistic, cap_override)
    return math.fsum(k * p for k, p in law.items())


def exact_Nl_distribution(n: int, measure: Measure, l: int, cap_override: bool = False) -> dict:
    """Law of ``N_l`` under ``measure``, e.g. the reference for the Poisson check."""
    if not 2 <= l <= n:
        raise PermutationError(f"block length must satisfy 2 <= l <= {n}")
    return _law(n, measure, lambda b: _nl_counts(b, l), cap_override)


def exact_expected_Nl(n: int, measure: Measure, l: int, cap_override: bool = False) -> float:
    """``E N_l`` as ``Σ_k P(A_{l;k})``."""
    if not 2 <= l <= n:
        raise PermutationError(f"block length must satisfy 2 <= l <= {n}")
    qs = [ClusterQuery(n, l, k) for k in range(1, n - l + 2)]
    parts = _reduce_blocks(
        n, measure, lambda b: [float(b.weights[_cluster_mask(b, q)].sum()) for q in qs],
        cap_override)
    return math.fsum(x for row in parts for x in row)


def exact_block_alignment(d: Measure, l: int, k: int, a: int, cap_override: bool = False) -> float:
    """``P(B_{l;k;a})`` on ``S_{k+l-1}``: the block ``k..k+l-1`` is adjacent and
    exactly ``a`` of ``1..k-1`` lie to its right."""
    if l < 2 or k < 1 or not 0 <= a <= k - 1:
        raise PermutationError(f"need l >= 2, k >= 1 and 0 <= a <= k-1; got l={l}, k={k}, a={a}")
    n = k + l - 1
    q = ClusterQuery(n, l, k)

    def part(block):
        mask = _cluster_mask(block, q)
        hi = block.pos[:, k:k + l].max(axis=1)
        right = (block.pos[:, 1:k] > hi[:, None]).sum(axis=1)
        return float(block.weights[mask & (right == a)].sum())

    return math.fsum(_reduce_blocks(n, d, part, cap_override))


def enumerate_pmf(n: int, measure: Measure, cap_override: bool = False):
    """All of ``S_n`` in lexicographic order with pmf values: ``(perms, weights)``."""
    perms, weights = [], []
    for b in _blocks(n, measure, cap_override):
        perms.append(b.perms)
        weights.append(b.weights)
    return np.concatenate(perms), np.concatenate(weights)
