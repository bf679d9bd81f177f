"""A quick, self-contained invariant suite behind ``permclust verify``.

Each check is small enough to finish in a few seconds; the full test
suite covers the same ground at larger sizes.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, List

import numpy as np

from . import analytic, exact, mc, permcore, sampler
from .permcore import ClusterQuery, Permutation
from .shiftdist import FiniteWithGeometricTail, Geometric


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _all_perms(n):
    return (Permutation(p) for p in itertools.permutations(range(1, n + 1)))


def check_rank_roundtrip():
    worst = 0
    for n in range(1, 7):
        for p in _all_perms(n):
            r = permcore.backward_ranks(p)
            if permcore.from_backward_ranks(r) != p or sum(r) != permcore.inversions(p):
                worst += 1
    return worst == 0, f"{worst} failures over S_1..S_6"


def check_duality():
    worst = 0.0
    for q in (0.3, 2.0):
        for n in range(2, 7):
            for l in range(2, n + 1):
                for k in range(1, n - l + 2):
                    a = exact.exact_cluster_prob(n, q, ClusterQuery(n, l, k))
                    b = exact.exact_cluster_prob(n, q, ClusterQuery(n, l, n + 2 - k - l))
                    worst = max(worst, abs(a - b))
    return worst <= 1e-12, f"max |difference| {worst:.3g}"


def check_mallows_identity():
    worst = 0.0
    for q in (0.2, 0.5, 0.8):
        d = Geometric(q)
        for p in _all_perms(5):
            worst = max(worst, abs(exact.mallows_pmf(p, q) - exact.pshifted_pmf(p, d)))
    return worst <= 1e-12, f"max |difference| {worst:.3g}"


def check_sandwich():
    worst = 0.0
    for d in (Geometric(0.3), Geometric(0.6), FiniteWithGeometricTail((0.5,), 0.5)):
        for n in range(5, 7):
            for l in range(2, n + 1):
                for k in range(1, n - l + 2):
                    ex = exact.exact_cluster_prob(n, d, ClusterQuery(n, l, k))
                    lo = analytic.cluster_lower_bound(d, n, l, k)
                    hi = analytic.cluster_upper_bound(d, n, l, k)
                    worst = max(worst, lo - ex, ex - hi)
                    if isinstance(d, Geometric):
                        worst = max(worst, analytic.mallows_cluster_lower_bound(n, l, k, d.q) - ex)
    return worst <= 1e-12, f"largest violation {worst:.3g}"


def check_constants():
    err = abs(analytic.kplus(2) - (1 - 2 / math.e))
    quad = max(abs(analytic.kplus(l) - analytic.kplus_quadrature(l)) for l in range(2, 21))
    coeff = analytic.alpha1_upper_coeff(1e-3, 0.5, 3)
    ok = err <= 1e-12 and quad <= 1e-10 and abs(coeff - 1) <= 1e-2
    return ok, f"kplus(2) err {err:.3g}, quadrature err {quad:.3g}, alpha1 coeff {coeff:.6f}"


def check_euler():
    rel = []
    for q, tol in ((0.99, 0.03), (0.999, 0.005)):
        a = math.pi ** 2 / (6 * (1 - q))
        rel.append((abs(analytic.log_euler_product(q) + a) / a, tol))
    return all(r <= t for r, t in rel), ", ".join(f"{r:.4f}" for r, _ in rel)


def check_determinism(workers: int):
    d = Geometric(0.7)
    a = sampler.insertion_batch(d, 30, 5, 64, sampler.STAT_PERM, workers=1)
    b = sampler.insertion_batch(d, 30, 5, 64, sampler.STAT_PERM, workers=max(2, workers))
    qs = [ClusterQuery(30, 3, k) for k in (1, 10, 28)]
    c = sampler.insertion_batch(d, 30, 5, 64, sampler.STAT_CLUSTER, qs)
    e = sampler.cluster_indicator_batch(d, 30, 5, 64, qs, workers=max(2, workers))
    ok = np.array_equal(a, b) and np.array_equal(c, e)
    return ok, "worker split and block-tracking path reproduce the full construction"


def check_mc_oracle(workers: int):
    q = ClusterQuery(8, 2, 3)
    rep = mc.estimate_cluster_prob(0.5, 8, q, mc.McConfig(20000, seed=1, workers=workers))
    ex = exact.exact_cluster_prob(8, 0.5, q)
    z = abs(rep.estimate - ex) / rep.std_error
    return z <= 3.9, f"|z| = {z:.2f}"


CHECKS: List[tuple] = [
    ("backward ranks round trip", check_rank_roundtrip),
    ("reverse-complement duality", check_duality),
    ("Mallows equals geometric p-shifted", check_mallows_identity),
    ("bound sandwich", check_sandwich),
    ("constants", check_constants),
    ("Euler product asymptotics", check_euler),
]


def run_checks(workers: int = 1) -> List[CheckResult]:
    out = []
    checks = CHECKS + [("sampler determinism", lambda: check_determinism(workers)),
                       ("MC vs enumeration", lambda: check_mc_oracle(workers))]
    for name, fn in checks:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(ok), detail))
    return out
