import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cascadeopt._rng import PortableRng


def test_same_seed_same_stream():
    a, b = PortableRng(3, 1), PortableRng(3, 1)
    assert np.array_equal(a.raw(16), b.raw(16))
    assert not np.array_equal(PortableRng(3, 1).raw(16), PortableRng(3, 2).raw(16))


def test_raw_words_match_pcg64_reference():
    bits = np.random.PCG64(np.random.SeedSequence([7]))
    assert np.array_equal(PortableRng(7).raw(5), bits.random_raw(5))


def test_uniform_is_top_53_bits():
    words = PortableRng(11).raw(100)
    u = PortableRng(11).uniform(100)
    expected = np.array([(int(w) >> 11) / 2**53 for w in words])
    assert np.array_equal(u, expected)
    assert u.min() >= 0.0 and u.max() < 1.0


def test_normal_moments():
    z = PortableRng(5).normal(200_000)
    assert abs(z.mean()) < 0.01
    assert abs(z.std() - 1.0) < 0.01


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 60))
def test_permutation_is_a_permutation(seed, n):
    p = PortableRng(seed).permutation(n)
    assert sorted(p.tolist()) == list(range(n))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 200), st.data())
def test_sample_without_replacement_distinct(seed, n, data):
    k = data.draw(st.integers(1, n))
    s = PortableRng(seed).sample_without_replacement(n, k)
    assert len(set(s.tolist())) == k
    assert s.min() >= 0 and s.max() < n


def test_full_sample_covers_range():
    s = PortableRng(9).sample_without_replacement(10, 10)
    assert sorted(s.tolist()) == list(range(10))


def test_rejects_bad_seeds():
    with pytest.raises(ValueError):
        PortableRng()
    with pytest.raises(ValueError):
        PortableRng(-1)
    with pytest.raises(ValueError):
        PortableRng(1).sample_without_replacement(3, 4)
