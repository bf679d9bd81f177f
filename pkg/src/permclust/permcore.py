"""Permutations in one-line notation and the statistics built on them.

Every function here is pure; ``Permutation`` and friends validate on
construction, so the operations assume well-formed input afterwards.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence


class PermutationError(ValueError):
    """Raised for malformed permutations, rank vectors and queries."""


@dataclass(frozen=True)
class Permutation:
    """A bijection of ``{1..n}`` stored as ``values = (σ_1, ..., σ_n)``."""

    values: tuple

    def __post_init__(self):
        vals = tuple(int(v) for v in self.values)
        n = len(vals)
        if n < 1:
            raise PermutationError("a permutation needs at least one entry")
        if sorted(vals) != list(range(1, n + 1)):
            raise PermutationError(f"{vals} is not a permutation of 1..{n}")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_text(cls, text: str) -> "Permutation":
        """Parse ``"2 3 4 1"``; a bare digit string such as ``"2341"`` also works for n < 10."""
        text = text.strip()
        parts = text.replace(",", " ").split()
        if len(parts) == 1 and len(text) > 1 and text.isdigit():
            parts = list(text)
        try:
            return cls(tuple(int(p) for p in parts))
        except ValueError as exc:
            raise PermutationError(f"cannot parse permutation from {text!r}") from exc

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(1, n + 1)))

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, i):
        return self.values[i]

    def __str__(self):
        return " ".join(map(str, self.values))

    def positions(self) -> list:
        """0-based position of each value; index 0 is unused."""
        pos = [0] * (len(self.values) + 1)
        for i, v in enumerate(self.values):
            pos[v] = i
        return pos


@dataclass(frozen=True)
class BackwardRanks:
    """``ranks[j-2] = I_{<j}``: how many of ``1..j-1`` sit to the right of ``j``."""

    ranks: tuple

    def __post_init__(self):
        r = tuple(int(x) for x in self.ranks)
        for idx, x in enumerate(r):
            j = idx + 2
            if not 0 <= x <= j - 1:
                raise PermutationError(f"backward rank I_<{j} = {x} outside 0..{j - 1}")
        object.__setattr__(self, "ranks", r)

    @property
    def n(self) -> int:
        return len(self.ranks) + 1

    def __iter__(self):
        return iter(self.ranks)

    def __len__(self):
        return len(self.ranks)


@dataclass(frozen=True)
class ClusterQuery:
    """The event that values ``k..k+l-1`` occupy ``l`` adjacent positions in ``S_n``.

    With ``pattern`` set, the block must additionally read as ``pattern``
    after subtracting ``k-1``.
    """

    n: int
    l: int
    k: int
    pattern: Optional[Permutation] = None

    def __post_init__(self):
        n, l, k = int(self.n), int(self.l), int(self.k)
        if l < 2:
            raise PermutationError(f"block length l must be >= 2, got {l}")
        if l > n:
            raise PermutationError(f"block length l={l} exceeds n={n}")
        if not 1 <= k <= n - l + 1:
            raise PermutationError(f"block start k={k} outside 1..{n - l + 1}")
        pattern = self.pattern
        if pattern is not None:
            if not isinstance(pattern, Permutation):
                pattern = Permutation(tuple(pattern))
            if len(pattern) != l:
                raise PermutationError(f"pattern has size {len(pattern)}, block length is {l}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "pattern", pattern)

    def dual(self) -> "ClusterQuery":
        """Image of the event under reverse-complement: start ``n+2-k-l``.

        A pattern maps to its own reverse-complement.
        """
        pat = None if self.pattern is None else reverse_complement(self.pattern)
        return ClusterQuery(self.n, self.l, self.n + 2 - self.k - self.l, pat)

    def reversed(self) -> "ClusterQuery":
        """Query ``q'`` with ``is_cluster(reverse(p), self) == is_cluster(p, q')``."""
        pat = None if self.pattern is None else reverse(self.pattern)
        return ClusterQuery(self.n, self.l, self.k, pat)


def _as_perm(p) -> Permutation:
    return p if isinstance(p, Permutation) else Permutation(tuple(p))


def inversions(p) -> int:
    """Number of pairs ``i < j`` with ``σ_i > σ_j``, by merge counting."""
    vals = list(_as_perm(p).values)

    def sort_count(a):
        if len(a) <= 1:
            return a, 0
        mid = len(a) // 2
        left, cl = sort_count(a[:mid])
        right, cr = sort_count(a[mid:])
        merged = []
        count = cl + cr
        i = j = 0
        while i < len(left) and j < len(right):
            if left[i] <= right[j]:
                merged.append(left[i])
                i += 1
            else:
                merged.append(right[j])
                count += len(left) - i
                j += 1
        merged.extend(left[i:])
        merged.extend(right[j:])
        return merged, count

    return sort_count(vals)[1]


def inversions_naive(p) -> int:
    vals = _as_perm(p).values
    n = len(vals)
    return sum(1 for i in range(n) for j in range(i + 1, n) if vals[i] > vals[j])


def reverse(p) -> Permutation:
    return Permutation(tuple(reversed(_as_perm(p).values)))


def complement(p) -> Permutation:
    p = _as_perm(p)
    n = len(p)
    return Permutation(tuple(n + 1 - v for v in p.values))


def reverse_complement(p) -> Permutation:
    return complement(reverse(p))


class _Fenwick:
    __slots__ = ("n", "tree")

    def __init__(self, n: int, fill: int = 0):
        self.n = n
        self.tree = [0] * (n + 1)
        if fill:
            for i in range(1, n + 1):
                self.tree[i] += fill
                parent = i + (i & -i)
                if parent <= n:
                    self.tree[parent] += self.tree[i]

    def add(self, i: int, delta: int):
        while i <= self.n:
            self.tree[i] += delta
            i += i & -i

    def prefix(self, i: int) -> int:
        s = 0
        while i > 0:
            s += self.tree[i]
            i -= i & -i
        return s

    def find(self, k: int) -> int:
        """Smallest index whose prefix sum reaches ``k`` (k >= 1)."""
        pos = 0
        step = 1 << self.n.bit_length()
        while step:
            nxt = pos + step
            if nxt <= self.n and self.tree[nxt] < k:
                pos = nxt
                k -= self.tree[nxt]
            step >>= 1
        return pos + 1


def backward_ranks(p) -> BackwardRanks:
    p = _as_perm(p)
    n = len(p)
    ranks = [0] * (n + 1)
    seen = _Fenwick(n)
    for v in reversed(p.values):
        ranks[v] = seen.prefix(v - 1)
        seen.add(v, 1)
    return BackwardRanks(tuple(ranks[2:]))


def from_backward_ranks(r) -> Permutation:
    """Insert ``j = 2..n`` so that exactly ``I_{<j}`` earlier values lie to its right."""
    if not isinstance(r, BackwardRanks):
        r = BackwardRanks(tuple(r))
    n = r.n
    # Walking j = n..1, value j takes the (j - I_{<j})-th still-free slot.
    free = _Fenwick(n, fill=1)
    out = [0] * n
    ranks = (0,) + r.ranks
    for j in range(n, 0, -1):
        slot = free.find(j - ranks[j - 1])
        out[slot - 1] = j
        free.add(slot, -1)
    return Permutation(tuple(out))


def _check_query(p: Permutation, q: ClusterQuery):
    if len(p) != q.n:
        raise PermutationError(f"query is for S_{q.n}, permutation has size {len(p)}")


def is_cluster(p, q: ClusterQuery) -> bool:
    p = _as_perm(p)
    _check_query(p, q)
    pos = p.positions()
    block = pos[q.k:q.k + q.l]
    lo, hi = min(block), max(block)
    if hi - lo != q.l - 1:
        return False
    if q.pattern is None:
        return True
    shift = q.k - 1
    return all(p.values[lo + i] - shift == t for i, t in enumerate(q.pattern.values))


def count_clusters(p, l: int) -> int:
    """``N_l``: how many value blocks ``{k..k+l-1}`` sit in adjacent positions."""
    p = _as_perm(p)
    n = len(p)
    if not 2 <= l <= n:
        raise PermutationError(f"block length l must satisfy 2 <= l <= {n}, got {l}")
    pos = p.positions()[1:]
    lo_q: deque = deque()
    hi_q: deque = deque()
    count = 0
    for i, x in enumerate(pos):
        while lo_q and pos[lo_q[-1]] >= x:
            lo_q.pop()
        lo_q.append(i)
        while hi_q and pos[hi_q[-1]] <= x:
            hi_q.pop()
        hi_q.append(i)
        start = i - l + 1
        if start < 0:
            continue
        if lo_q[0] < start:
            lo_q.popleft()
        if hi_q[0] < start:
            hi_q.popleft()
        if pos[hi_q[0]] - pos[lo_q[0]] == l - 1:
            count += 1
    return count


def project(prefix: Iterable[int], n: int) -> Permutation:
    """Delete entries larger than ``n`` from a prefix of a permutation of ℕ."""
    kept = [int(v) for v in prefix if v <= n]
    if sorted(kept) != list(range(1, n + 1)):
        missing = sorted(set(range(1, n + 1)) - set(kept))
        raise PermutationError(f"prefix does not contain all of 1..{n}; missing {missing[:10]}")
    return Permutation(tuple(kept))


def reduce(segment: Sequence[int]) -> Permutation:
    """Shift a permutation of ``{a+1..a+m}`` down to ``S_m``."""
    seg = [int(v) for v in segment]
    if not seg:
        raise PermutationError("cannot reduce an empty segment")
    a = min(seg) - 1
    if sorted(seg) != list(range(a + 1, a + len(seg) + 1)):
        raise PermutationError(f"{seg} is not a permutation of a consecutive range")
    return Permutation(tuple(v - a for v in seg))
