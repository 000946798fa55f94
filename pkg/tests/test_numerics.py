import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from onebit_rf.errors import DomainError, InvalidArgumentError, SingularMatrixError
from onebit_rf.numerics import (
    RandomStream,
    dft,
    elementwise_arcsine,
    gaussian_stream,
    idft,
    pseudo_inverse,
)


def direct_dft(x, sign=-1):
    N = len(x)
    n = np.arange(N)
    return np.exp(sign * 2j * np.pi * np.outer(n, n) / N) @ x


class TestDft:
    def test_impulse(self):
        np.testing.assert_allclose(dft([1, 0, 0, 0]), [1, 1, 1, 1])

    def test_dc(self):
        np.testing.assert_allclose(dft(np.ones(4)), [4, 0, 0, 0], atol=1e-15)

    def test_matches_direct_sum(self, rng):
        x = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        assert np.max(np.abs(dft(x) - direct_dft(x))) < 1e-12

    def test_idft_of_dc(self):
        np.testing.assert_allclose(idft([4, 0, 0, 0]), np.ones(4))

    def test_idft_matches_direct_sum(self, rng):
        X = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        assert np.max(np.abs(idft(X) - direct_dft(X, +1) / 16)) < 1e-12

    def test_round_trip_64(self, rng):
        x = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        assert np.max(np.abs(idft(dft(x)) - x)) < 1e-12

    @given(arrays(np.float64, st.integers(1, 128), elements=st.floats(-1e3, 1e3)))
    def test_round_trip_property(self, x):
        assert np.allclose(idft(dft(x)), x, atol=1e-9)

    @pytest.mark.parametrize("bad", [[], np.zeros((2, 2))])
    def test_rejects_bad_shapes(self, bad):
        with pytest.raises(InvalidArgumentError):
            dft(bad)


class TestPseudoInverse:
    def test_identity(self):
        np.testing.assert_allclose(pseudo_inverse(np.eye(4)), np.eye(4), atol=1e-15)

    def test_scaled_stacked_identity(self):
        A = np.vstack([2 * np.eye(4), np.zeros((4, 4))])
        expected = np.hstack([0.5 * np.eye(4), np.zeros((4, 4))])
        np.testing.assert_allclose(pseudo_inverse(A), expected, atol=1e-15)

    def test_left_inverse_32x4(self, rng):
        A = rng.standard_normal((32, 4)) + 1j * rng.standard_normal((32, 4))
        assert np.max(np.abs(pseudo_inverse(A) @ A - np.eye(4))) < 1e-10

    def test_rank_deficient_raises_with_subcarrier(self):
        A = np.ones((4, 2))
        with pytest.raises(SingularMatrixError) as info:
            pseudo_inverse(A, subcarrier=5)
        assert info.value.subcarrier == 5

    def test_wide_matrix_rejected(self):
        with pytest.raises(InvalidArgumentError):
            pseudo_inverse(np.ones((2, 4)))

    @given(st.integers(1, 6), st.integers(0, 6), st.integers(0, 2**32 - 1))
    def test_left_inverse_property(self, U, extra, seed):
        g = np.random.default_rng(seed)
        A = g.standard_normal((U + extra, U)) + 1j * g.standard_normal((U + extra, U))
        assert np.allclose(pseudo_inverse(A) @ A, np.eye(U), atol=1e-8)


class TestArcsine:
    def test_identity(self):
        out = elementwise_arcsine(np.eye(3))
        np.testing.assert_allclose(out, np.pi / 2 * np.eye(3), atol=1e-15)

    def test_half(self):
        np.testing.assert_allclose(elementwise_arcsine(0.5 * np.ones((2, 2))), np.full((2, 2), np.pi / 6))

    def test_matches_scalar(self, rng):
        M = rng.uniform(-1, 1, (5, 5))
        expected = np.vectorize(np.arcsin)(M)
        np.testing.assert_array_equal(elementwise_arcsine(M), expected)

    def test_tiny_overshoot_clipped(self):
        assert elementwise_arcsine(np.array([1 + 1e-12]))[0] == pytest.approx(np.pi / 2)

    def test_domain_error(self):
        with pytest.raises(DomainError):
            elementwise_arcsine(np.array([1.01]))

    def test_nan_is_domain_error(self):
        with pytest.raises(DomainError):
            elementwise_arcsine(np.array([np.nan]))


class TestRandomStream:
    def test_deterministic(self):
        a = RandomStream(3, 9).standard_normal(1000)
        b = RandomStream(3, 9).standard_normal(1000)
        np.testing.assert_array_equal(a, b)

    def test_moments(self):
        x = RandomStream(0, 0).standard_normal(10**6)
        assert abs(x.mean()) < 0.01
        assert abs(x.var() - 1) < 0.01

    def test_distinct_ids_uncorrelated(self):
        a = RandomStream(0, 0).standard_normal(1000)
        b = RandomStream(0, 1).standard_normal(1000)
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.1

    def test_int_and_tuple_ids_agree(self):
        np.testing.assert_array_equal(RandomStream(5, 2).standard_normal(4), RandomStream(5, (2,)).standard_normal(4))

    def test_tuple_ids_differ_by_position(self):
        a = RandomStream(5, (1, 2)).standard_normal(8)
        b = RandomStream(5, (2, 1)).standard_normal(8)
        assert not np.array_equal(a, b)

    def test_gaussian_stream_take_matches_next(self):
        s1 = gaussian_stream(RandomStream(1, 4))
        s2 = gaussian_stream(RandomStream(1, 4))
        block = s1.take(5000)
        singles = np.array([next(s2) for _ in range(5000)])
        np.testing.assert_array_equal(block, singles)
        np.testing.assert_array_equal(block[:4096], RandomStream(1, 4).standard_normal(4096))
