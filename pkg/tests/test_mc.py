import math

import numpy as np
import pytest
from scipy import stats

from permclust.exact import exact_cluster_prob, exact_expected_Nl, exact_Nl_distribution
from permclust.mc import (McConfig, cluster_successes, construction_equivalence, estimate_cluster_prob,
                          estimate_cluster_probs, estimate_expected_Nl, gof_backward_ranks,
                          inversion_rate_limit, mean_report, poisson_law, poisson_N2_check,
                          resolve_measure, scaling_experiment, tv_distance, wilson_report,
                          wlln_inversions)
from permclust.analytic import ScalingGrid
from permclust.permcore import ClusterQuery, PermutationError
from permclust.shiftdist import Geometric, PowerLaw, truncated_pmf


def z_score(rep, exact):
    return abs(rep.estimate - exact) / rep.std_error


def test_config_validation():
    for bad in (dict(samples=0), dict(samples=5, confidence=1.0), dict(samples=5, workers=0)):
        with pytest.raises(ValueError):
            McConfig(**bad)
    assert McConfig(10, confidence=0.95).z == pytest.approx(1.959963984540054)


def test_wilson_interval():
    r = wilson_report(30, 100, 0.95)
    assert r.estimate == 0.3
    # textbook Wilson interval for 30/100 at 95%
    assert r.ci_low == pytest.approx(0.2189, abs=1e-4)
    assert r.ci_high == pytest.approx(0.3958, abs=1e-4)
    edge = wilson_report(0, 50, 0.99)
    assert edge.ci_low == 0.0 and edge.ci_high > 0.0


def test_mean_report():
    r = mean_report(10.0, 30.0, 5, 0.99)
    assert r.estimate == 2.0
    assert r.std_error == pytest.approx(math.sqrt(2.5 / 5))


def test_resolve_measure():
    assert resolve_measure(0.4) == (Geometric(0.4), False)
    assert resolve_measure(2.5)[1] is True
    assert resolve_measure(2.5)[0].q == pytest.approx(0.4)
    assert resolve_measure(1.0) == ("uniform", False)
    with pytest.raises(ValueError):
        resolve_measure(-1.0)


def test_estimate_matches_oracle():
    q = ClusterQuery(8, 2, 3)
    rep = estimate_cluster_prob(0.5, 8, q, McConfig(100_000, seed=3))
    assert z_score(rep, exact_cluster_prob(8, 0.5, q)) <= 3.9
    assert rep.ci_low <= rep.estimate <= rep.ci_high
    rep = estimate_cluster_prob(1.0, 4, ClusterQuery(4, 2, 1), McConfig(100_000, seed=4))
    assert z_score(rep, 0.5) <= 3.9


def test_whole_block_is_certain():
    rep = estimate_cluster_prob(0.7, 9, ClusterQuery(9, 9, 1), McConfig(1000, seed=5))
    assert rep.estimate == 1.0 and rep.std_error == 0.0


def test_query_must_match_n():
    with pytest.raises(PermutationError):
        estimate_cluster_prob(0.5, 8, ClusterQuery(7, 2, 1), McConfig(10))


@pytest.mark.parametrize("query", [ClusterQuery(6, 3, 2), ClusterQuery(6, 2, 1),
                                   ClusterQuery(6, 3, 2, (3, 1, 2)), ClusterQuery(6, 2, 4, (2, 1))])
def test_q_above_one(query):
    rep = estimate_cluster_prob(2.0, 6, query, McConfig(100_000, seed=6))
    assert z_score(rep, exact_cluster_prob(6, 2.0, query)) <= 3.9


def test_patterns_and_plain_paths_agree_with_oracle():
    qs = [ClusterQuery(7, 3, k, (2, 3, 1)) for k in (1, 3, 5)] + [ClusterQuery(7, 3, 3)]
    reps = estimate_cluster_probs(0.4, 7, qs, McConfig(100_000, seed=7))
    for q, rep in zip(qs, reps):
        assert z_score(rep, exact_cluster_prob(7, 0.4, q)) <= 3.9


def test_expected_Nl():
    rep = estimate_expected_Nl(1.0, 5, 2, McConfig(100_000, seed=8))
    assert z_score(rep, 1.6) <= 3.9
    rep = estimate_expected_Nl(0.3, 8, 3, McConfig(100_000, seed=9))
    assert z_score(rep, exact_expected_Nl(8, 0.3, 3)) <= 3.9
    one = estimate_expected_Nl(0.3, 8, 8, McConfig(500, seed=1))
    assert one.estimate == 1.0 and one.std_error == 0.0


def test_poisson_law():
    law = poisson_law(2.0)
    assert law[0] == pytest.approx(math.exp(-2))
    assert 1 - math.fsum(law.values()) < 1e-9
    assert tv_distance({0: 1.0}, {1: 1.0}) == 1.0


def test_poisson_limit_for_N2():
    chk = poisson_N2_check(1000, McConfig(10_000, seed=10))
    assert chk.tv <= 0.05


def test_N2_law_at_n7_against_enumeration():
    ref = exact_Nl_distribution(7, 1.0, 2)
    cfg = McConfig(100_000, seed=11)
    chk = poisson_N2_check(7, cfg, reference=ref)
    for k, p in ref.items():
        se = math.sqrt(p * (1 - p) / cfg.samples)
        assert abs(chk.empirical.get(k, 0.0) - p) <= 3.9 * se + 1e-12
    assert chk.tv <= 0.01


def test_wlln():
    assert inversion_rate_limit(Geometric(0.5)) == pytest.approx(1.0)
    rep = wlln_inversions(Geometric(0.5), 10_000, McConfig(1000, seed=12))
    assert abs(rep.estimate - 1.0) <= 0.05
    assert wlln_inversions(0.5, 1, McConfig(10)).estimate == 0.0
    # q > 1 through reversal: the complement count
    lo = wlln_inversions(0.5, 40, McConfig(2000, seed=13)).estimate
    hi = wlln_inversions(2.0, 40, McConfig(2000, seed=13)).estimate
    assert lo + hi == pytest.approx(39 / 2)


def test_wlln_heavy_tail_grows():
    d = PowerLaw(1.5)
    assert inversion_rate_limit(d) == math.inf
    ests = [wlln_inversions(d, n, McConfig(400, seed=14)).estimate for n in (100, 1000, 10_000)]
    assert ests[0] < ests[1] < ests[2]
    assert ests[2] > 3 * ests[0]


def test_gof_backward_ranks():
    rep = gof_backward_ranks(Geometric(0.5), 10, 10, McConfig(1_000_000, seed=15))
    assert rep.min_pvalue() > 1e-3
    assert rep.pair_independence.pvalue > 1e-3
    wrong = gof_backward_ranks(Geometric(0.5), 10, 10, McConfig(100_000, seed=16), null=Geometric(0.7))
    assert wrong.min_pvalue() < 1e-6
    assert sum(truncated_pmf(Geometric(0.5), 2, i) for i in range(2)) == pytest.approx(1.0)


def test_construction_equivalence():
    chk = construction_equivalence(Geometric(0.5), 4, McConfig(200_000, seed=17))
    assert chk.tv_between <= 0.02
    assert chk.tv_psi_exact <= 0.02 and chk.tv_insertion_exact <= 0.02


def test_coverage_calibration():
    q = ClusterQuery(6, 2, 3)
    exact = exact_cluster_prob(6, 0.5, q)
    hits = 0
    for rep_i in range(200):
        r = estimate_cluster_prob(0.5, 6, q, McConfig(2000, seed=1000 + rep_i, confidence=0.99))
        hits += r.ci_low <= exact <= r.ci_high
    assert hits >= 190


def test_duality_in_simulation():
    n, q = 12, 0.6
    for l, k in ((2, 1), (3, 2), (4, 5)):
        a = estimate_cluster_prob(q, n, ClusterQuery(n, l, k), McConfig(100_000, seed=20 + k))
        b = estimate_cluster_prob(q, n, ClusterQuery(n, l, n + 2 - k - l), McConfig(100_000, seed=40 + k))
        joint = math.hypot(a.std_error, b.std_error)
        assert abs(a.estimate - b.estimate) <= 3.9 * joint


def test_reproducible_across_workers():
    qs = [ClusterQuery(50, 3, k, p) for k in (1, 20) for p in (None, (2, 1, 3))]
    counts = [cluster_successes(0.8, 50, qs, McConfig(5000, seed=21, workers=w)) for w in (1, 4, 16)]
    assert all(np.array_equal(counts[0], c) for c in counts[1:])
    inv = [wlln_inversions(0.9, 60, McConfig(3000, seed=22, workers=w)) for w in (1, 4, 16)]
    assert inv[0] == inv[1] == inv[2]


def test_seeds_give_independent_estimates():
    q = ClusterQuery(20, 2, 5)
    a = cluster_successes(0.5, 20, [q], McConfig(20_000, seed=1))
    b = cluster_successes(0.5, 20, [q], McConfig(20_000, seed=2))
    assert a[0] != b[0]


def test_scaling_experiment_rows():
    grid = ScalingGrid(0.5, 1.0, 2, (100, 400))
    rows = scaling_experiment(grid, McConfig(20_000, seed=23))
    assert [r.n for r in rows] == [100, 400]
    for r in rows:
        assert r.normalized == pytest.approx(r.report.estimate * math.sqrt(r.n))
        assert r.envelope_lower < r.envelope_upper
