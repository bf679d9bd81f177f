"""Random p-shifted permutations by both constructions, plus renewal scanning.

Construction B (insertion) draws backward ranks ``X_j`` from the truncated
shift law and inserts ``j`` with ``X_j`` smaller numbers to its right.
Construction A (``ψ``) draws untruncated ``n_k`` and takes the ``n_k``-th
smallest unused positive integer; projecting to ``S_n`` gives the same law.

Replicate ``r`` of a batch always consumes stream ``(seed, r)`` from draw 0,
so a batch is reproducible no matter how it is split across workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numba
import numpy as np

from .permcore import ClusterQuery, Permutation, PermutationError, from_backward_ranks, reduce
from .rng import MASK64, RngStream, fill_uniforms
from .shiftdist import Geometric, ShiftDistribution, truncated_search

UNIFORM = "uniform"

# statistic selectors for the insertion batch kernel
STAT_CLUSTER = 0
STAT_COUNT = 1
STAT_INVERSIONS = 2
STAT_RANKS = 3
STAT_PERM = 4


def rank_mode(measure):
    """Kernel hint ``(mode, log q)`` for the closed-form rank guess."""
    if isinstance(measure, Geometric):
        return 1, math.log(measure.q)
    if isinstance(measure, str) and measure == UNIFORM:
        return 2, 0.0
    return 0, 0.0


def rank_table(measure, n: int) -> np.ndarray:
    """Cumulative weights ``c[0..n]`` with ``P(X_j = i) = (c[i+1]-c[i]) / c[j]``.

    ``measure`` is a ``ShiftDistribution`` or the string ``"uniform"``; the
    uniform table ``c[i] = i`` makes every ``X_j`` uniform on ``0..j-1``.
    """
    if isinstance(measure, str) and measure == UNIFORM:
        return np.arange(n + 1, dtype=np.float64)
    if isinstance(measure, ShiftDistribution):
        return np.ascontiguousarray(measure.cdf_table(n), dtype=np.float64)
    raise TypeError(f"unsupported measure {measure!r}")


# --------------------------------------------------------------------------
# numba kernels

@numba.njit(cache=True, nogil=True)
def _search(table, j, u):
    lo = 0
    hi = j - 1
    top = table[j]
    while lo < hi:
        mid = (lo + hi) // 2
        if table[mid + 1] / top > u:
            hi = mid
        else:
            lo = mid + 1
    return lo


@numba.njit(cache=True, nogil=True)
def _draw_rank(table, j, u, mode, logq):
    """Smallest ``i`` with ``table[i+1] / table[j] > u``.

    mode 1 (geometric) and 2 (uniform) start from a closed-form guess and
    then walk to the exact answer, so every mode returns the same value.
    """
    if mode == 0:
        return _search(table, j, u)
    top = table[j]
    if mode == 1:
        i = int(math.log1p(-u * top) / logq)
    else:
        i = int(u * j)
    if i > j - 1:
        i = j - 1
    if i < 0:
        i = 0
    while i > 0 and table[i] / top > u:
        i -= 1
    while table[i + 1] / top <= u:
        i += 1
    return i


@numba.njit(cache=True, nogil=True)
def _ranks_from_uniforms(table, u, ranks, mode, logq):
    # ranks[j] = X_j for j = 2..n; u[j-2] drives X_j
    n = ranks.shape[0] - 1
    ranks[0] = 0
    if n >= 1:
        ranks[1] = 0
    for j in range(2, n + 1):
        ranks[j] = _draw_rank(table, j, u[j - 2], mode, logq)


@numba.njit(cache=True, nogil=True)
def _positions_from_ranks(ranks, tree, pos, perm):
    # tree has power-of-two length > n; entries past n are padding
    n = ranks.shape[0] - 1
    size = tree.shape[0]
    for i in range(1, size):
        tree[i] = i & (-i) if i <= n else n + 1
    top = size // 2
    for j in range(n, 0, -1):
        k = j - ranks[j]
        p = 0
        step = top
        while step > 0:
            nxt = p + step
            t = tree[nxt]
            if t < k:
                p = nxt
                k -= t
            step >>= 1
        slot = p + 1
        i = slot
        while i <= n:
            tree[i] -= 1
            i += i & (-i)
        pos[j] = slot - 1
        perm[slot - 1] = j


@numba.njit(cache=True, nogil=True)
def _inversions(perm, tree):
    n = perm.shape[0]
    for i in range(n + 1):
        tree[i] = 0
    total = 0
    for idx in range(n - 1, -1, -1):
        v = perm[idx]
        i = v - 1
        s = 0
        while i > 0:
            s += tree[i]
            i -= i & (-i)
        total += s
        i = v
        while i <= n:
            tree[i] += 1
            i += i & (-i)
    return total


@numba.njit(cache=True, nogil=True)
def _is_cluster(pos, perm, l, k, pattern, pat_start):
    lo = pos[k]
    hi = pos[k]
    for v in range(k + 1, k + l):
        p = pos[v]
        if p < lo:
            lo = p
        if p > hi:
            hi = p
    if hi - lo != l - 1:
        return 0
    if pat_start < 0:
        return 1
    for i in range(l):
        if perm[lo + i] - (k - 1) != pattern[pat_start + i]:
            return 0
    return 1


@numba.njit(cache=True, nogil=True)
def _count_clusters(pos, n, l, lo_q, hi_q):
    # sliding-window min and max of pos[k..k+l-1]
    lh = 0
    lt = 0
    hh = 0
    ht = 0
    count = 0
    for v in range(1, n + 1):
        x = pos[v]
        while lt > lh and pos[lo_q[lt - 1]] >= x:
            lt -= 1
        lo_q[lt] = v
        lt += 1
        while ht > hh and pos[hi_q[ht - 1]] <= x:
            ht -= 1
        hi_q[ht] = v
        ht += 1
        start = v - l + 1
        if start < 1:
            continue
        if lo_q[lh] < start:
            lh += 1
        if hi_q[hh] < start:
            hh += 1
        if pos[hi_q[hh]] - pos[lo_q[lh]] == l - 1:
            count += 1
    return count


@numba.njit(cache=True, nogil=True)
def _insertion_batch(table, mode, logq, n, seed, start, count, stat, qparams, pattern, out):
    """Generate ``count`` permutations from streams ``start..start+count-1``.

    ``qparams`` rows are ``(l, k, pattern_offset)`` for STAT_CLUSTER and
    ``(l, -, -)`` for STAT_COUNT.
    """
    m = max(n - 1, 0)
    u = np.empty(m, dtype=np.float64)
    ranks = np.empty(n + 1, dtype=np.int64)
    size = 1
    while size <= n:
        size *= 2
    tree = np.empty(size, dtype=np.int64)
    pos = np.empty(n + 1, dtype=np.int64)
    perm = np.empty(n, dtype=np.int64)
    lo_q = np.empty(n + 1, dtype=np.int64)
    hi_q = np.empty(n + 1, dtype=np.int64)
    for r in range(count):
        fill_uniforms(seed, np.uint64(start + r), 0, u)
        _ranks_from_uniforms(table, u, ranks, mode, logq)
        _positions_from_ranks(ranks, tree, pos, perm)
        if stat == 0:
            for qi in range(qparams.shape[0]):
                out[r, qi] = _is_cluster(pos, perm, qparams[qi, 0], qparams[qi, 1],
                                         pattern, qparams[qi, 2])
        elif stat == 1:
            for qi in range(qparams.shape[0]):
                out[r, qi] = _count_clusters(pos, n, qparams[qi, 0], lo_q, hi_q)
        elif stat == 2:
            out[r, 0] = _inversions(perm, tree)
        elif stat == 3:
            for j in range(2, n + 1):
                out[r, j - 2] = ranks[j]
        else:
            for i in range(n):
                out[r, i] = perm[i]


@numba.njit(cache=True, nogil=True)
def _block_indicator(table, mode, logq, n, l, k, seed, stream, u):
    """Whether values ``k..k+l-1`` end up adjacent, tracking only the block.

    Reads the same draws as the full construction (``u`` slot ``j-2`` drives
    ``X_j``) and makes the same comparisons, so the answer matches
    ``_is_cluster`` on the full permutation for every stream.  Draws before
    ``X_k`` never matter and are skipped; the walk stops once the block is
    split.
    """
    chunk = u.shape[0]
    j = k if k >= 2 else 2
    base = j - 2
    fill_uniforms(seed, stream, base, u)
    if k >= 2:
        right = _draw_rank(table, k, u[0], mode, logq)
        j = k + 1
    else:
        right = 0
        j = 2
    while j <= n:
        idx = j - 2 - base
        if idx >= chunk:
            base = j - 2
            fill_uniforms(seed, stream, base, u)
            idx = 0
        x = u[idx]
        top = table[j]
        if j < k + l:
            # block member j: needs right <= X_j <= right + (j - k)
            if right > 0 and not table[right] / top <= x:
                return 0
            if not table[right + j - k + 1] / top > x:
                return 0
        else:
            if table[right + 1] / top > x:
                right += 1
            elif not table[right + l] / top <= x:
                return 0
        j += 1
    return 1


@numba.njit(cache=True, nogil=True)
def _block_batch(table, mode, logq, n, seed, start, count, qparams, out):
    u = np.empty(64, dtype=np.float64)
    for r in range(count):
        stream = np.uint64(start + r)
        for qi in range(qparams.shape[0]):
            out[r, qi] = _block_indicator(table, mode, logq, n, qparams[qi, 0],
                                          qparams[qi, 1], seed, stream, u)


@numba.njit(cache=True, nogil=True)
def _quantile(table, tail_j, tail_level, log_ratio, u):
    # smallest j >= 1 with cdf(j) > u
    J = table.shape[0] - 1
    if J >= 1 and u < table[J]:
        lo = 1
        hi = J
        while lo < hi:
            mid = (lo + hi) // 2
            if table[mid] > u:
                hi = mid
            else:
                lo = mid + 1
        return lo
    if tail_j == 0:
        x = math.log1p(-u) / log_ratio
    else:
        x = (math.log1p(-u) - math.log(tail_level)) / log_ratio
    j = tail_j + int(math.floor(x)) + 1
    if j < tail_j + 1:
        j = tail_j + 1
    return j


@numba.njit(cache=True, nogil=True)
def _psi_insert(used, size, m):
    # m-th smallest positive integer not in used[0:size]; keeps used sorted
    lo = 0
    hi = size
    while lo < hi:
        mid = (lo + hi) // 2
        if used[mid] - mid - 1 < m:
            lo = mid + 1
        else:
            hi = mid
    c = m + lo
    for i in range(size, lo, -1):
        used[i] = used[i - 1]
    used[lo] = c
    return c


@numba.njit(cache=True, nogil=True)
def _psi_prefix_batch(table, tail_j, tail_level, log_ratio, length, seed, start, count, out):
    u = np.empty(length, dtype=np.float64)
    used = np.empty(length, dtype=np.int64)
    for r in range(count):
        fill_uniforms(seed, np.uint64(start + r), 0, u)
        for t in range(length):
            m = _quantile(table, tail_j, tail_level, log_ratio, u[t])
            out[r, t] = _psi_insert(used, t, m)


@numba.njit(cache=True, nogil=True)
def _psi_projected_batch(table, tail_j, tail_level, log_ratio, n, seed, start, count, out):
    chunk = 64
    u = np.empty(chunk, dtype=np.float64)
    for r in range(count):
        cap = 4 * n + 64
        used = np.empty(cap, dtype=np.int64)
        size = 0
        found = 0
        offset = 0
        while found < n:
            fill_uniforms(seed, np.uint64(start + r), offset, u)
            offset += chunk
            for t in range(chunk):
                m = _quantile(table, tail_j, tail_level, log_ratio, u[t])
                if size == cap:
                    bigger = np.empty(2 * cap, dtype=np.int64)
                    bigger[:size] = used[:size]
                    used = bigger
                    cap *= 2
                c = _psi_insert(used, size, m)
                size += 1
                if c <= n:
                    out[r, found] = c
                    found += 1
                    if found == n:
                        break


# --------------------------------------------------------------------------
# batch drivers

def _split(count: int, workers: int) -> List[Tuple[int, int]]:
    workers = max(1, min(int(workers), count)) if count else 1
    base, extra = divmod(count, workers)
    blocks, s = [], 0
    for w in range(workers):
        size = base + (1 if w < extra else 0)
        blocks.append((s, size))
        s += size
    return blocks


def _run_blocks(fn, count: int, width: int, start: int, workers: int) -> np.ndarray:
    out = np.zeros((count, width), dtype=np.int64)
    blocks = [(s, c) for s, c in _split(count, workers) if c > 0]
    if len(blocks) <= 1:
        for s, c in blocks:
            fn(start + s, c, out[s:s + c])
        return out
    with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
        futures = [pool.submit(fn, start + s, c, out[s:s + c]) for s, c in blocks]
        for f in futures:
            f.result()
    return out


def insertion_batch(measure, n: int, seed: int, count: int, stat: int = STAT_PERM,
                    queries: Sequence = (), start: int = 0, workers: int = 1) -> np.ndarray:
    """Per-replicate integer statistics for ``count`` insertion-construction permutations.

    ``stat`` selects the output columns: one indicator per ``ClusterQuery``
    (STAT_CLUSTER), one ``N_l`` per block length in ``queries``
    (STAT_COUNT), the inversion count (STAT_INVERSIONS), the backward ranks
    ``I_{<2}..I_{<n}`` (STAT_RANKS) or the permutation itself (STAT_PERM).
    """
    table = rank_table(measure, n)
    patterns: List[int] = []
    if stat == STAT_CLUSTER:
        rows = []
        for q in queries:
            if q.n != n:
                raise PermutationError(f"query is for S_{q.n}, sampling S_{n}")
            off = -1
            if q.pattern is not None:
                off = len(patterns)
                patterns.extend(q.pattern.values)
            rows.append((q.l, q.k, off))
        width = len(rows)
    elif stat == STAT_COUNT:
        rows = []
        for l in queries:
            if not 2 <= int(l) <= n:
                raise PermutationError(f"block length must satisfy 2 <= l <= {n}")
            rows.append((int(l), 0, -1))
        width = len(rows)
    elif stat == STAT_INVERSIONS:
        rows, width = [], 1
    elif stat == STAT_RANKS:
        rows, width = [], max(n - 1, 0)
    elif stat == STAT_PERM:
        rows, width = [], n
    else:
        raise ValueError(f"unknown statistic selector {stat}")
    qparams = np.array(rows, dtype=np.int64).reshape(-1, 3)
    pat = np.array(patterns or [0], dtype=np.int64)
    seed64 = np.uint64(int(seed) & MASK64)

    mode, logq = rank_mode(measure)

    def work(s, c, view):
        _insertion_batch(table, mode, logq, n, seed64, s, c, stat, qparams, pat, view)

    return _run_blocks(work, count, width, start, workers)


def cluster_indicator_batch(measure, n: int, seed: int, count: int, queries: Sequence,
                            start: int = 0, workers: int = 1) -> np.ndarray:
    """Cluster indicators for pattern-free queries without building the permutation.

    Column ``i`` equals ``insertion_batch(..., STAT_CLUSTER, queries)[:, i]``
    exactly, replicate by replicate, at a cost that depends on how long the
    block survives rather than on ``n``.
    """
    rows = []
    for q in queries:
        if q.n != n:
            raise PermutationError(f"query is for S_{q.n}, sampling S_{n}")
        if q.pattern is not None:
            raise ValueError("patterned queries need the full construction (insertion_batch)")
        rows.append((q.l, q.k))
    table = rank_table(measure, n)
    qparams = np.array(rows, dtype=np.int64).reshape(-1, 2)
    seed64 = np.uint64(int(seed) & MASK64)
    mode, logq = rank_mode(measure)

    def work(s, c, view):
        _block_batch(table, mode, logq, n, seed64, s, c, qparams, view)

    return _run_blocks(work, count, len(rows), start, workers)


def _quantile_params(d: ShiftDistribution, table_size: int = 64):
    geo = d.geometric_tail()
    if geo is None:
        raise NotImplementedError(f"{type(d).__name__} has no geometric tail; use the pure-Python path")
    J, ratio = geo
    table = np.ascontiguousarray(d.cdf_table(J), dtype=np.float64) if J > 0 else np.zeros(1)
    level = d.tail(J) if J > 0 else 1.0
    return table, int(J), float(level), math.log(ratio)


def psi_prefix_batch(d: ShiftDistribution, length: int, seed: int, count: int,
                     start: int = 0, workers: int = 1) -> np.ndarray:
    """Prefixes ``Π_1..Π_length`` of construction A, one row per replicate."""
    table, J, level, logr = _quantile_params(d)
    seed64 = np.uint64(int(seed) & MASK64)

    def work(s, c, view):
        _psi_prefix_batch(table, J, level, logr, length, seed64, s, c, view)

    return _run_blocks(work, count, length, start, workers)


def psi_projected_batch(d: ShiftDistribution, n: int, seed: int, count: int,
                        start: int = 0, workers: int = 1) -> np.ndarray:
    """``proj_n`` of construction-A permutations, streaming each prefix until 1..n appear."""
    table, J, level, logr = _quantile_params(d)
    seed64 = np.uint64(int(seed) & MASK64)

    def work(s, c, view):
        _psi_projected_batch(table, J, level, logr, n, seed64, s, c, view)

    return _run_blocks(work, count, n, start, workers)


# --------------------------------------------------------------------------
# single-permutation API

def sample_perm_insertion(d, n: int, rng: RngStream) -> Permutation:
    """One permutation of ``S_n`` by backward-rank insertion; uses draws ``0..n-2`` of ``rng``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return Permutation((1,))
    table = rank_table(d, n)
    u = rng.uniforms(n - 1)
    ranks = [truncated_search(table, j, u[j - 2]) for j in range(2, n + 1)]
    return from_backward_ranks(ranks)


def _psi_map(used: list, m: int) -> int:
    lo, hi = 0, len(used)
    while lo < hi:
        mid = (lo + hi) // 2
        if used[mid] - mid - 1 < m:
            lo = mid + 1
        else:
            hi = mid
    c = m + lo
    used.insert(lo, c)
    return c


def psi_from_samples(samples: Sequence[int]) -> list:
    """Map raw draws ``n_1, n_2, ...`` to ``Π_k = ψ_k(n_k)``."""
    used: list = []
    out = []
    for m in samples:
        m = int(m)
        if m < 1:
            raise ValueError("raw samples must be positive integers")
        out.append(_psi_map(used, m))
    return out


def sample_prefix_psi(d: ShiftDistribution, length: int, rng: RngStream) -> list:
    """``Π_1..Π_length`` of construction A; draw ``t`` of ``rng`` drives ``n_{t+1}``."""
    if length < 1:
        raise ValueError("length must be >= 1")
    u = rng.uniforms(length)
    return psi_from_samples(d.quantile(float(x)) for x in u)


def sample_projected_psi(d: ShiftDistribution, n: int, rng: RngStream) -> Permutation:
    """``proj_n`` of a construction-A permutation, streaming until ``1..n`` have appeared."""
    used: list = []
    kept = []
    offset = 0
    chunk = 64
    while len(kept) < n:
        for x in rng.uniforms(chunk, offset):
            c = _psi_map(used, d.quantile(float(x)))
            if c <= n:
                kept.append(c)
                if len(kept) == n:
                    break
        offset += chunk
    return Permutation(tuple(kept))


# --------------------------------------------------------------------------
# renewals

@dataclass(frozen=True)
class RenewalRecord:
    renewal_times: tuple
    segments: tuple


def renewal_scan(prefix: Sequence[int]) -> RenewalRecord:
    """Renewals are the positions ``T`` with ``max(Π_1..Π_T) = T``."""
    times = []
    segments = []
    running = 0
    last = 0
    vals = [int(v) for v in prefix]
    if len(set(vals)) != len(vals) or any(v < 1 for v in vals):
        raise PermutationError("prefix entries must be distinct positive integers")
    for t, v in enumerate(vals, start=1):
        running = max(running, v)
        if running == t:
            times.append(t)
            segments.append(reduce(vals[last:t]))
            last = t
    return RenewalRecord(tuple(times), tuple(segments))


@dataclass(frozen=True)
class RenewalStatistics:
    num_prefixes: int
    prefix_length: int
    renewal_freq: np.ndarray      # index n-1 -> fraction of prefixes with a renewal at n
    renewal_se: np.ndarray
    first_renewal_counts: np.ndarray  # index t-1 -> #prefixes with T_1 = t
    censored: int                 # prefixes without a renewal inside the window
    mean_t1: float
    mean_t1_se: float
    mean_gap: float
    mean_gap_se: float
    second_gap_counts: np.ndarray  # index t-1 -> #prefixes with T_2 - T_1 = t

    def first_renewal_freq(self) -> np.ndarray:
        return self.first_renewal_counts / self.num_prefixes


def renewal_statistics(d: ShiftDistribution, num_prefixes: int, prefix_length: int,
                       seed: int, start: int = 0, workers: int = 1) -> RenewalStatistics:
    """Aggregate renewal scans over ``num_prefixes`` independent streams ``start, start+1, ...``."""
    if num_prefixes < 1 or prefix_length < 1:
        raise ValueError("num_prefixes and prefix_length must be positive")
    pref = psi_prefix_batch(d, prefix_length, seed, num_prefixes, start=start, workers=workers)
    ren = np.maximum.accumulate(pref, axis=1) == np.arange(1, prefix_length + 1)
    freq = ren.mean(axis=0)
    se = np.sqrt(freq * (1 - freq) / num_prefixes)
    has = ren.any(axis=1)
    t1 = ren.argmax(axis=1)[has] + 1
    counts = np.bincount(t1, minlength=prefix_length + 1)[1:]
    # gaps T_i - T_{i-1} (T_0 = 0) observed inside the window, in row-major order
    rows, cols = np.nonzero(ren)
    times = cols + 1
    new_row = np.r_[True, rows[1:] != rows[:-1]]
    gaps = times - np.where(new_row, 0, np.r_[0, times[:-1]])
    rank_in_row = np.arange(rows.size) - np.maximum.accumulate(np.where(new_row, np.arange(rows.size), 0))
    second = np.bincount(gaps[rank_in_row == 1], minlength=prefix_length + 1)[1:]

    def mean_se(x):
        if x.size == 0:
            return math.nan, math.nan
        if x.size == 1:
            return float(x[0]), math.nan
        return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))
    m1, s1 = mean_se(t1.astype(float))
    mg, sg = mean_se(gaps.astype(float))
    return RenewalStatistics(num_prefixes, prefix_length, freq, se, counts,
                             int((~has).sum()), m1, s1, mg, sg, second)
