import math

import numpy as np
import pytest
from scipy import special

from permclust.shiftdist import (DistributionError, FiniteWithGeometricTail, Geometric, PowerLaw,
                                 cdf, first_renewal_pmf, is_positive_recurrent, mean,
                                 parse_distribution, pmf, renewal_prob, renewal_sequence,
                                 truncated_pmf, truncated_sample)

FAMILIES = [Geometric(0.5), Geometric(0.97), FiniteWithGeometricTail((0.5,), 0.5),
            FiniteWithGeometricTail((0.2, 0.5, 0.1), 0.8), PowerLaw(2.0), PowerLaw(1.5), PowerLaw(3.0)]


def test_pmf_and_cdf_examples():
    assert pmf(Geometric(0.5), 1) == 0.5
    assert pmf(Geometric(0.5), 3) == pytest.approx(0.125, abs=1e-15)
    assert pmf(PowerLaw(2.0), 1) == pytest.approx(6 / math.pi ** 2, abs=1e-14)
    assert cdf(Geometric(0.5), 3) == pytest.approx(0.875, abs=1e-15)
    assert cdf(FiniteWithGeometricTail((0.5,), 0.5), 2) == pytest.approx(0.75, abs=1e-15)
    for d in FAMILIES:
        assert cdf(d, 0) == 0.0


@pytest.mark.parametrize("d", FAMILIES, ids=lambda d: d.spec())
def test_cdf_matches_pmf_partial_sums(d):
    p = d.pmf_table(1000)
    c = d.cdf_table(1000)
    assert np.all(p[1:] > 0)
    assert np.max(np.abs(np.cumsum(p) - c)) <= 1e-12
    # cdf saturates at 1.0 in double precision, so strict growth is checked on the tails
    tails = d.tail_table(1000)
    assert np.all(tails > 0) and np.all(np.diff(tails) < 0)
    assert np.allclose(d.tail_table(50), 1 - c[:51], atol=1e-15)
    for j in (0, 1, 7, 300):
        assert d.cdf(j) == pytest.approx(c[j], abs=1e-15)


@pytest.mark.parametrize("d", FAMILIES, ids=lambda d: d.spec())
def test_tail_sum_against_direct_summation(d):
    if not math.isfinite(d.mean()):
        assert d.tail_sum(3) == math.inf
        return
    tails = d.tail_table(200000)
    for j in (0, 1, 5):
        direct = math.fsum(tails[j + 1:].tolist())
        # the direct sum misses the far tail; for PowerLaw(3) that is about 1/(2ζ(3)·2·10^5)
        assert d.tail_sum(j) == pytest.approx(direct, abs=5e-6)


def test_family_specific_sums():
    assert FiniteWithGeometricTail((0.5,), 0.5).cdf(9) == pytest.approx(Geometric(0.5).cdf(9), abs=1e-15)
    assert PowerLaw(3.0).mean() == pytest.approx(special.zeta(2) / special.zeta(3), rel=1e-13)


def test_truncated_law():
    g = Geometric(0.5)
    assert truncated_pmf(g, 2, 0) == pytest.approx(2 / 3, abs=1e-15)
    for q in (0.2, 0.9):
        assert truncated_pmf(Geometric(q), 2, 1) / truncated_pmf(Geometric(q), 2, 0) == pytest.approx(q)
    for d in FAMILIES:
        assert truncated_pmf(d, 2, 0) + truncated_pmf(d, 2, 1) == pytest.approx(1.0, abs=1e-15)
        assert math.fsum(truncated_pmf(d, 9, i) for i in range(9)) == pytest.approx(1.0, abs=1e-14)
    with pytest.raises(DistributionError):
        truncated_pmf(g, 3, 3)
    with pytest.raises(DistributionError):
        truncated_pmf(g, 1, 0)


def test_truncated_sample_examples():
    g = Geometric(0.5)
    assert truncated_sample(g, 3, 0.0) == 0
    assert truncated_sample(g, 3, 0.99) == 2
    for d in FAMILIES:
        p0 = truncated_pmf(d, 2, 0)
        assert truncated_sample(d, 2, p0 - 1e-12) == 0
        assert truncated_sample(d, 2, p0 + 1e-12) == 1


@pytest.mark.parametrize("d", FAMILIES[:5], ids=lambda d: d.spec())
def test_truncated_sample_is_exact_inverse_cdf(d):
    j = 7
    m = 100000
    grid = (np.arange(m) + 0.5) / m
    draws = np.array([truncated_sample(d, j, u) for u in grid])
    freq = np.bincount(draws, minlength=j) / m
    want = np.array([truncated_pmf(d, j, i) for i in range(j)])
    assert np.max(np.abs(freq - want)) <= 1.0 / m + 1e-12


def test_quantile_is_smallest_index_above_u():
    # cdf(j) > u  <=>  tail(j) < 1 - u; the tail form avoids rounding 1 - tail back onto u
    rng = np.random.default_rng(0)
    for d in FAMILIES:
        for u in np.concatenate([rng.random(200), [0.0, 0.5, 0.999999]]):
            j = d.quantile(float(u))
            assert d.tail(j) < 1 - u
            assert j == 1 or d.tail(j - 1) >= 1 - u


def test_mean_and_recurrence():
    assert mean(Geometric(0.5)) == pytest.approx(2.0)
    assert mean(PowerLaw(1.5)) == math.inf
    assert math.isfinite(mean(FiniteWithGeometricTail((1 - 1e-9,), 0.5)))
    assert is_positive_recurrent(Geometric(0.1))
    assert not is_positive_recurrent(PowerLaw(1.5))
    assert not is_positive_recurrent(PowerLaw(2.0))
    assert is_positive_recurrent(PowerLaw(3.0))


def test_renewal_probabilities():
    g = Geometric(0.5)
    assert renewal_prob(g, 3) == pytest.approx(0.328125, abs=1e-15)
    assert renewal_prob(g, 0) == 1.0
    for d in FAMILIES:
        assert renewal_prob(d, 1) == pytest.approx(d.pmf(1), abs=1e-15)
        u = renewal_sequence(d, 100)
        assert np.all(np.diff(u) <= 0)


def test_first_renewal_law():
    f = first_renewal_pmf(Geometric(0.5), 5)
    # exact rationals from the renewal equation: 1/2, 1/8, 5/64, 59/1024, 1477/32768
    want = [1 / 2, 1 / 8, 5 / 64, 59 / 1024, 1477 / 32768]
    assert np.allclose(f, want, atol=1e-15)
    for d in FAMILIES:
        f = first_renewal_pmf(d, 60)
        assert f[0] == pytest.approx(d.pmf(1), abs=1e-15)
        assert np.all(f >= -1e-12) and f.sum() <= 1 + 1e-12
        u = renewal_sequence(d, 60)
        resid = [u[n] - math.fsum(f[k - 1] * u[n - k] for k in range(1, n + 1)) for n in range(1, 61)]
        assert max(abs(r) for r in resid) <= 1e-10


def test_renewal_limit_matches_inverse_mean_first_renewal():
    d = Geometric(0.5)
    f = first_renewal_pmf(d, 400)
    assert f.sum() >= 1 - 1e-12
    et1 = math.fsum((np.arange(1, 401) * f).tolist())
    assert 1 / et1 == pytest.approx(renewal_prob(d, 400), abs=1e-6)


def test_parse_distribution_round_trip():
    for d in FAMILIES:
        assert parse_distribution(d.spec()) == d
    assert parse_distribution("geom:q=0.5") == Geometric(0.5)
    assert parse_distribution("finitetail:w=0.5,0.2;r=0.5") == FiniteWithGeometricTail((0.5, 0.2), 0.5)
    for bad in ("geom:q=1.5", "nope:x=1", "geom:", "finitetail:w=0.6,0.5;r=0.5", "power:s=1"):
        with pytest.raises(DistributionError):
            parse_distribution(bad)


def test_monotonicity_flag():
    assert Geometric(0.4).is_non_increasing()
    assert PowerLaw(2.5).is_non_increasing()
    assert FiniteWithGeometricTail((0.5,), 0.5).is_non_increasing()
    assert not FiniteWithGeometricTail((0.2, 0.5), 0.5).is_non_increasing()
