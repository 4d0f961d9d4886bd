import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

import oracles
from escapelab import rng

SEEDS = st.integers(0, 2 ** 64 - 1)


class TestAgainstScalarReference:
    @given(SEEDS, st.integers(0, 10 ** 6))
    def test_derived_seed(self, master, index):
        assert int(rng.derive_seeds(master, 1, index)[0]) == oracles.derived_seed(master, index)

    @settings(max_examples=50)
    @given(SEEDS, st.integers(0, 10 ** 6))
    def test_normal_draw(self, seed, m):
        got = rng.normals([seed], m, 1)[0, 0]
        assert got == oracles.counter_normal(seed, m)


class TestStreams:
    @settings(max_examples=30)
    @given(SEEDS, st.integers(0, 500), st.integers(1, 300), st.integers(1, 300))
    def test_chunking_is_invisible(self, seed, start, n1, n2):
        whole = rng.normals([seed], start, n1 + n2)
        parts = np.concatenate([rng.normals([seed], start, n1),
                                rng.normals([seed], start + n1, n2)], axis=1)
        np.testing.assert_array_equal(whole, parts)

    def test_rows_are_independent_of_batch(self):
        seeds = rng.derive_seeds(11, 50)
        batch = rng.normals(seeds, 7, 20)
        for i in (0, 17, 49):
            np.testing.assert_array_equal(batch[i], rng.normals(seeds[i:i + 1], 7, 20)[0])

    @pytest.mark.parametrize("chunk", [1, 7, 256])
    def test_noise_stream_matches_flat_draws(self, chunk):
        seeds = rng.derive_seeds(5, 3)
        stream = rng.NoiseStream(seeds, dim=2, chunk_steps=chunk)
        flat = rng.normals(seeds, 0, 2 * 40).reshape(3, 40, 2)
        for k in range(40):
            np.testing.assert_array_equal(stream.at(k), flat[:, k, :])

    def test_compact_keeps_selected_rows(self):
        seeds = rng.derive_seeds(5, 4)
        stream = rng.NoiseStream(seeds, dim=1, chunk_steps=8)
        ref = rng.NoiseStream(seeds[[0, 2]], dim=1, chunk_steps=8)
        stream.at(3)
        stream.compact(np.array([True, False, True, False]))
        for k in range(3, 20):
            np.testing.assert_array_equal(stream.at(k), ref.at(k))

    def test_distinct_masters_give_distinct_seeds(self):
        assert not np.array_equal(rng.derive_seeds(1, 100), rng.derive_seeds(2, 100))
        assert np.unique(rng.derive_seeds(1, 10000)).size == 10000


class TestDistribution:
    def test_standard_normal_moments_and_ks(self):
        z = rng.normals(rng.derive_seeds(123, 1), 0, 200000)[0]
        assert abs(z.mean()) < 4 / np.sqrt(z.size)
        assert abs(z.var() - 1.0) < 4 * np.sqrt(2.0 / z.size)
        assert stats.kstest(z, oracles.gaussian_cdf).pvalue > 1e-3

    def test_cross_path_correlation_is_small(self):
        z = rng.normals(rng.derive_seeds(9, 2), 0, 100000)
        assert abs(np.corrcoef(z)[0, 1]) < 4 / np.sqrt(z.shape[1])
