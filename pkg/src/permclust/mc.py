"""Monte Carlo estimates with confidence intervals, and statistical checks of the samplers.

Every replicate ``r`` reads stream ``(seed, r)``, and per-replicate
statistics are integers, so totals are exact and do not depend on how the
replicates were split across workers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from .permcore import ClusterQuery, PermutationError
from .sampler import (STAT_COUNT, STAT_INVERSIONS, STAT_PERM, STAT_RANKS, UNIFORM,
                      cluster_indicator_batch, insertion_batch, psi_projected_batch)
from .shiftdist import DistributionError, Geometric, ShiftDistribution, truncated_pmf

CHUNK = 1 << 18

Measure = Union[float, ShiftDistribution, str]


@dataclass(frozen=True)
class McConfig:
    samples: int
    seed: int = 0
    confidence: float = 0.99
    workers: int = 1

    def __post_init__(self):
        if int(self.samples) < 1:
            raise ValueError("samples must be positive")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must lie in (0, 1)")
        if int(self.workers) < 1:
            raise ValueError("workers must be positive")

    @property
    def z(self) -> float:
        return float(stats.norm.ppf(0.5 + self.confidence / 2.0))


@dataclass(frozen=True)
class EstimateReport:
    estimate: float
    std_error: float
    ci_low: float
    ci_high: float
    samples: int


def wilson_report(successes: int, samples: int, confidence: float) -> EstimateReport:
    """Binomial proportion with a Wilson score interval."""
    z = float(stats.norm.ppf(0.5 + confidence / 2.0))
    p = successes / samples
    se = math.sqrt(p * (1.0 - p) / samples)
    denom = 1.0 + z * z / samples
    centre = (p + z * z / (2 * samples)) / denom
    half = z / denom * math.sqrt(p * (1.0 - p) / samples + z * z / (4.0 * samples * samples))
    lo = max(0.0, min(p, centre - half))
    hi = min(1.0, max(p, centre + half))
    return EstimateReport(p, se, lo, hi, samples)


def mean_report(total: float, total_sq: float, samples: int, confidence: float) -> EstimateReport:
    """Sample mean with a normal interval, from the sum and the sum of squares."""
    z = float(stats.norm.ppf(0.5 + confidence / 2.0))
    m = total / samples
    if samples > 1:
        var = max(total_sq - samples * m * m, 0.0) / (samples - 1)
        se = math.sqrt(var / samples)
    else:
        se = 0.0
    return EstimateReport(m, se, m - z * se, m + z * se, samples)


def resolve_measure(measure: Measure) -> Tuple[Union[ShiftDistribution, str], bool]:
    """Sampling measure and whether events must be reversed.

    ``q < 1`` is Geometric(q), ``q = 1`` the uniform law, and ``q > 1`` is
    Geometric(1/q) seen through reversal.
    """
    if isinstance(measure, ShiftDistribution):
        return measure, False
    if isinstance(measure, str):
        if measure != UNIFORM:
            raise ValueError(f"unknown measure {measure!r}")
        return UNIFORM, False
    q = float(measure)
    if not q > 0:
        raise DistributionError(f"Mallows parameter must be positive, got {q}")
    if q == 1.0:
        return UNIFORM, False
    if q < 1.0:
        return Geometric(q), False
    return Geometric(1.0 / q), True


def _chunks(total: int, size: int = CHUNK):
    start = 0
    while start < total:
        count = min(size, total - start)
        yield start, count
        start += count


# --------------------------------------------------------------------------
# cluster probabilities and N_l

def cluster_successes(measure: Measure, n: int, queries: Sequence[ClusterQuery],
                      cfg: McConfig) -> np.ndarray:
    """Number of replicates where each query's event holds."""
    sampling, flip = resolve_measure(measure)
    qs = [q.reversed() if flip else q for q in queries]
    for q in qs:
        if q.n != n:
            raise PermutationError(f"query is for S_{q.n}, sampling S_{n}")
    simple = all(q.pattern is None for q in qs)
    totals = np.zeros(len(qs), dtype=np.int64)
    for start, count in _chunks(int(cfg.samples)):
        if simple:
            out = cluster_indicator_batch(sampling, n, cfg.seed, count, qs, start, cfg.workers)
        else:
            out = insertion_batch(sampling, n, cfg.seed, count, 0, qs, start, cfg.workers)
        totals += out.sum(axis=0)
    return totals


def estimate_cluster_probs(measure: Measure, n: int, queries: Sequence[ClusterQuery],
                           cfg: McConfig) -> List[EstimateReport]:
    """One report per query; all queries are read off the same replicates."""
    hits = cluster_successes(measure, n, queries, cfg)
    return [wilson_report(int(h), int(cfg.samples), cfg.confidence) for h in hits]


def estimate_cluster_prob(measure: Measure, n: int, query: ClusterQuery,
                          cfg: McConfig) -> EstimateReport:
    """Fraction of sampled permutations where ``query`` holds, with a Wilson interval."""
    return estimate_cluster_probs(measure, n, [query], cfg)[0]


def estimate_expected_Nl(measure: Measure, n: int, l: int, cfg: McConfig) -> EstimateReport:
    """Sample mean of ``N_l``; reversal leaves ``N_l`` unchanged, so ``q > 1`` needs no remap."""
    if not 2 <= l <= n:
        raise PermutationError(f"block length must satisfy 2 <= l <= {n}")
    sampling, _ = resolve_measure(measure)
    total = 0
    total_sq = 0
    for start, count in _chunks(int(cfg.samples)):
        out = insertion_batch(sampling, n, cfg.seed, count, STAT_COUNT, [l], start, cfg.workers)[:, 0]
        total += int(out.sum())
        total_sq += int((out * out).sum())
    return mean_report(float(total), float(total_sq), int(cfg.samples), cfg.confidence)


def Nl_counts(measure: Measure, n: int, l: int, cfg: McConfig) -> Dict[int, int]:
    """Histogram of ``N_l`` over the replicates."""
    sampling, _ = resolve_measure(measure)
    hist: Dict[int, int] = {}
    for start, count in _chunks(int(cfg.samples)):
        out = insertion_batch(sampling, n, cfg.seed, count, STAT_COUNT, [l], start, cfg.workers)[:, 0]
        vals, cnt = np.unique(out, return_counts=True)
        for v, c in zip(vals.tolist(), cnt.tolist()):
            hist[v] = hist.get(v, 0) + c
    return dict(sorted(hist.items()))


def tv_distance(p: Dict[int, float], q: Dict[int, float]) -> float:
    keys = set(p) | set(q)
    return 0.5 * math.fsum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def poisson_law(mean: float, cutoff: float = 1e-9) -> Dict[int, float]:
    """Poisson pmf up to the point where the remaining mass drops below ``cutoff``."""
    out = {}
    k = 0
    while True:
        out[k] = float(stats.poisson.pmf(k, mean))
        if k >= mean and stats.poisson.sf(k, mean) < cutoff:
            return out
        k += 1


@dataclass(frozen=True)
class LawCheck:
    tv: float
    empirical: dict
    reference: dict
    samples: int


def poisson_N2_check(n: int, cfg: McConfig, reference: Optional[Dict[int, float]] = None,
                     measure: Measure = UNIFORM) -> LawCheck:
    """TV distance between the sampled law of ``N_2`` and Poisson(2), or ``reference`` if given."""
    hist = Nl_counts(measure, n, 2, cfg)
    emp = {k: c / cfg.samples for k, c in hist.items()}
    ref = poisson_law(2.0) if reference is None else dict(reference)
    return LawCheck(tv_distance(emp, ref), emp, ref, int(cfg.samples))


# --------------------------------------------------------------------------
# inversions

def inversion_rate_limit(d: ShiftDistribution) -> float:
    """``E X = Σ_n n p_{n+1}``, the limit of inversions per position; infinite for heavy tails."""
    return d.mean() - 1.0


def wlln_inversions(measure: Measure, n: int, cfg: McConfig) -> EstimateReport:
    """Sample mean of ``inversions/n``.

    For ``q > 1`` a sample ``σ`` from Geometric(1/q) stands for its reversal,
    which has ``C(n, 2) - inv(σ)`` inversions.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    sampling, flip = resolve_measure(measure)
    pairs = n * (n - 1) // 2
    total = 0
    total_sq = 0
    for start, count in _chunks(int(cfg.samples)):
        inv = insertion_batch(sampling, n, cfg.seed, count, STAT_INVERSIONS, (), start,
                              cfg.workers)[:, 0]
        if flip:
            inv = pairs - inv
        total += int(inv.sum())
        total_sq += sum(int(x) * int(x) for x in inv.tolist())
    return mean_report(total / n, total_sq / (n * n), int(cfg.samples), cfg.confidence)


# --------------------------------------------------------------------------
# backward-rank goodness of fit

@dataclass(frozen=True)
class ChiSquare:
    statistic: float
    dof: int
    pvalue: float


@dataclass(frozen=True)
class GofReport:
    per_j: Dict[int, ChiSquare]
    pair_independence: ChiSquare
    samples: int

    def min_pvalue(self) -> float:
        return min(c.pvalue for c in self.per_j.values())


def _chisq(observed: np.ndarray, expected: np.ndarray, min_expected: float = 5.0) -> ChiSquare:
    """Pearson statistic after pooling cells from the right until each expects ``min_expected``."""
    obs, exp = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(observed[::-1], expected[::-1]):
        o_acc += o
        e_acc += e
        if e_acc >= min_expected:
            obs.append(o_acc)
            exp.append(e_acc)
            o_acc = e_acc = 0.0
    if e_acc > 0 or o_acc > 0:
        if exp:
            obs[-1] += o_acc
            exp[-1] += e_acc
        else:
            obs.append(o_acc)
            exp.append(e_acc)
    obs_a, exp_a = np.array(obs), np.array(exp)
    stat = float(((obs_a - exp_a) ** 2 / exp_a).sum())
    dof = len(obs) - 1
    p = float(stats.chi2.sf(stat, dof)) if dof > 0 else 1.0
    return ChiSquare(stat, dof, p)


def gof_backward_ranks(d: ShiftDistribution, n: int, j_max: int, cfg: McConfig,
                       null: Optional[ShiftDistribution] = None) -> GofReport:
    """Chi-square fit of each sampled ``I_{<j}`` (``j = 2..j_max``) to the truncated law of ``null``.

    Also tests independence of ``I_{<2}`` and ``I_{<3}`` with a 2x3 contingency table.
    """
    if not 2 <= j_max <= n:
        raise ValueError(f"need 2 <= j_max <= n, got j_max={j_max}, n={n}")
    null = d if null is None else null
    counts = {j: np.zeros(j, dtype=np.int64) for j in range(2, j_max + 1)}
    pair = np.zeros((2, 3), dtype=np.int64)
    for start, count in _chunks(int(cfg.samples)):
        ranks = insertion_batch(d, n, cfg.seed, count, STAT_RANKS, (), start, cfg.workers)
        for j in range(2, j_max + 1):
            counts[j] += np.bincount(ranks[:, j - 2], minlength=j)
        if n >= 3:
            np.add.at(pair, (ranks[:, 0], ranks[:, 1]), 1)
    per_j = {}
    for j, obs in counts.items():
        exp = cfg.samples * np.array([truncated_pmf(null, j, i) for i in range(j)])
        per_j[j] = _chisq(obs.astype(float), exp)
    if n >= 3:
        stat, p, dof, _ = stats.chi2_contingency(pair, correction=False)
        pair_res = ChiSquare(float(stat), int(dof), float(p))
    else:
        pair_res = ChiSquare(0.0, 0, 1.0)
    return GofReport(per_j, pair_res, int(cfg.samples))


# --------------------------------------------------------------------------
# construction equivalence

@dataclass(frozen=True)
class ConstructionCheck:
    tv_between: float
    tv_psi_exact: float
    tv_insertion_exact: float
    samples: int


def _perm_codes(perms: np.ndarray, n: int) -> np.ndarray:
    weights = (n + 1) ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return perms @ weights


def construction_equivalence(d: ShiftDistribution, n: int, cfg: McConfig) -> ConstructionCheck:
    """TV distances between the projected construction-A law, the insertion law and the exact pmf.

    Construction A reads streams ``0..samples-1`` and insertion reads the
    next ``samples`` streams, so the two samples are independent.
    """
    from .exact import enumerate_pmf

    perms, pmf = enumerate_pmf(n, d)
    index = {code: i for i, code in enumerate(_perm_codes(perms, n).tolist())}
    hist_a = np.zeros(len(index))
    hist_b = np.zeros(len(index))
    total = int(cfg.samples)
    for start, count in _chunks(total):
        a = psi_projected_batch(d, n, cfg.seed, count, start=start, workers=cfg.workers)
        b = insertion_batch(d, n, cfg.seed, count, STAT_PERM, (), total + start, cfg.workers)
        for hist, batch in ((hist_a, a), (hist_b, b)):
            idx = np.array([index[c] for c in _perm_codes(batch, n).tolist()])
            hist += np.bincount(idx, minlength=len(index))
    fa, fb = hist_a / total, hist_b / total
    return ConstructionCheck(0.5 * float(np.abs(fa - fb).sum()),
                             0.5 * float(np.abs(fa - pmf).sum()),
                             0.5 * float(np.abs(fb - pmf).sum()), total)


# --------------------------------------------------------------------------
# scaling runs

@dataclass(frozen=True)
class ScalingRow:
    n: int
    q: float
    k: int
    report: EstimateReport
    normalized: float
    envelope_lower: float
    envelope_upper: float


def scaling_experiment(grid, cfg: McConfig) -> List[ScalingRow]:
    """Cluster probability along ``q_n = 1 - c/n^α``, scaled by ``n^{α(l-1)}``.

    Each ``n`` uses its own seed offset so the grid points are independent.
    """
    from .analytic import theorem1_envelope

    rows = []
    for i, env in enumerate(theorem1_envelope(grid)):
        sub = McConfig(cfg.samples, (int(cfg.seed) + i) & ((1 << 64) - 1), cfg.confidence, cfg.workers)
        rep = estimate_cluster_prob(env.q, env.n, ClusterQuery(env.n, grid.l, env.k), sub)
        scale = grid.scale(env.n)
        rows.append(ScalingRow(env.n, env.q, env.k, rep, scale * rep.estimate,
                               scale * env.lower, scale * env.upper_improved))
    return rows
