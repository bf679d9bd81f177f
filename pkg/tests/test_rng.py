import numpy as np
import pytest

from permclust.rng import MASK64, RngStream


@pytest.mark.parametrize("seed,stream", [(0, 0), (1, 7), (2**63 + 5, 3), (123456789, 2**40)])
def test_philox_matches_numpy_reference(seed, stream):
    # numpy's Philox4x64 with key (seed, stream) and a zero counter is the reference
    ref = np.random.Generator(np.random.Philox(key=np.array([seed, stream], dtype=np.uint64)))
    want = ref.random(1000)
    got = RngStream(seed, stream).uniforms(1000)
    assert np.array_equal(got, want)


def test_offset_is_a_window_into_the_same_sequence():
    s = RngStream(42, 9)
    full = s.uniforms(200)
    for off in (0, 1, 3, 4, 5, 63, 101):
        assert np.array_equal(s.uniforms(50, off), full[off:off + 50])


def test_streams_differ_and_seed_is_masked():
    a = RngStream(5, 0).uniforms(16)
    b = RngStream(5, 1).uniforms(16)
    assert not np.array_equal(a, b)
    assert RngStream(-1, 0).seed == MASK64
    assert np.array_equal(RngStream(5, 0).spawn(1).uniforms(16), b)


def test_uniforms_in_unit_interval():
    u = RngStream(3).uniforms(100000)
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.005
