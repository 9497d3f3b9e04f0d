import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from regslab.sampling import (
    GOLDEN,
    RngStream,
    build_distribution,
    derive_stream,
    mix64,
    sample,
    sample_index,
    sample_indices,
    stream_keys,
    uniforms_at,
)


def test_splitmix64_reference_output():
    # first output of the reference SplitMix64 generator seeded with 0
    assert mix64(GOLDEN) == 0xE220A8397B1DCDAF


def test_probabilities_normalize():
    np.testing.assert_allclose(build_distribution([4.0, 1.0]).probabilities, [0.8, 0.2])


def test_zero_weight_never_returned():
    d = build_distribution([1.0, 0.0, 3.0])
    assert d.probabilities[1] == 0.0
    u = RngStream(3).uniforms(100_000)
    assert 1 not in set(sample_indices(d, u).tolist())
    # the boundary where u*total lands exactly on the zero-width interval
    assert sample_index(d, 0.25) == 2


def test_all_zero_weights_rejected():
    with pytest.raises(ValueError):
        build_distribution([0.0, 0.0])


def test_inverse_cdf_examples():
    d = build_distribution([4.0, 1.0])
    assert sample_index(d, 0.9) == 1
    assert sample_index(d, 0.0) == 0


def test_upper_edge_maps_to_last_support():
    d = build_distribution([1.0, 2.0, 0.0])
    assert sample_index(d, np.nextafter(1.0, 0.0)) == 1


def test_single_support():
    d = build_distribution([0.0, 5.0, 0.0])
    rng = RngStream(9)
    assert {sample(d, rng) for _ in range(200)} == {1}


def test_cumulative_total():
    w = np.random.default_rng(0).random(50)
    d = build_distribution(w)
    assert abs(d.cumulative[-1] - w.sum()) <= 1e-12 * w.sum()


def test_chi_square_goodness_of_fit():
    d = build_distribution([4.0, 1.0])
    n = 1_000_000
    counts = np.bincount(sample_indices(d, RngStream(2024).uniforms(n)), minlength=2)
    expected = n * np.array([0.8, 0.2])
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    assert chi2 < 10.828  # chi-square, 1 dof, upper 0.001 quantile


def test_frequencies_within_four_standard_errors():
    w = np.array([1.0, 2.0, 0.0, 3.0, 4.0])
    d = build_distribution(w)
    n = 1_000_000
    counts = np.bincount(sample_indices(d, RngStream(77).uniforms(n)), minlength=w.size)
    p = w / w.sum()
    se = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(counts / n - p) <= 4 * se + 1e-15)


def test_stream_determinism():
    a, b = derive_stream(7, 0), derive_stream(7, 0)
    assert [a.next_uint64() for _ in range(100)] == [b.next_uint64() for _ in range(100)]


def test_distinct_trials_collision_check():
    firsts = {derive_stream(7, t).next_uint64() for t in range(10_000)}
    assert len(firsts) == 10_000
    other = {derive_stream(8, t).next_uint64() for t in range(10_000)}
    assert not firsts & other


def test_different_seeds_differ():
    a, b = derive_stream(8, 0), derive_stream(7, 0)
    assert [a.uniform() for _ in range(10)] != [b.uniform() for _ in range(10)]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**64 - 1), st.integers(0, 2**20), st.integers(0, 50))
def test_vectorized_draws_match_scalar(seed, stream, counter):
    s = RngStream(seed, stream, counter)
    batch = uniforms_at(stream_keys(seed, [stream]), counter)[0]
    assert batch == s.uniform()
    s2 = RngStream(seed, stream, counter)
    np.testing.assert_array_equal(s2.uniforms(5), [RngStream(seed, stream, counter + c).uniform()
                                                  for c in range(5)])


def test_uniforms_in_unit_interval():
    u = RngStream(1).uniforms(100_000)
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 4 * np.sqrt(1 / 12 / u.size)


def test_normals_moments():
    z = RngStream(5).normals(200_001)
    assert z.size == 200_001
    assert abs(z.mean()) < 4 / np.sqrt(z.size)
    assert abs(z.var() - 1) < 4 * np.sqrt(2 / z.size)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=20).filter(lambda w: sum(w) > 0),
       st.floats(0, 1, exclude_max=True))
def test_sample_stays_in_support(w, u):
    d = build_distribution(w)
    assert int(sample_index(d, u)) in set(d.support.tolist())
