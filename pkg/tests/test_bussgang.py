import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from onebit_rf.bussgang import (
    SecondOrderModel,
    analytical_evm,
    analytical_psd,
    arcsine_autocov,
    autocov_x,
    autocov_y,
    bussgang_gain,
    dithered_stats,
    distortion_cov,
    normalized_autocov,
    pooled_evm,
)
from onebit_rf.channel import draw_channel
from onebit_rf.errors import DegenerateInputError, InvalidArgumentError, UnsupportedModeError
from onebit_rf.harness.config import ExperimentConfig
from onebit_rf.numerics import RandomStream
from onebit_rf.txchain import apply_channel, map_qam, upconvert

REF_SET = (4092, 4093, 4094, 4095, 0, 1, 2, 3, 4)
PURE_NOISE_DISTORTION = 2 - 4 / np.pi


def small_model(B=3, U=2, N=64, ks=(63, 0, 1), f_c=2.5e9, f_s=10e9, seed=0, Es=1.0):
    ch = draw_channel(B, U, 4, RandomStream(seed))
    return SecondOrderModel.from_channel(ch, ks, N, f_c, f_s, Es), ch


class TestAutocovariance:
    def test_zero_lag_is_gram_sum(self, small_channel):
        ks = (63, 0, 1)
        Hk = small_channel.responses(ks, 64)
        R0 = autocov_x(small_channel, 1.0, 64, ks, 2.5e9, 10e9, [0])[0]
        expected = sum(np.real(H @ H.conj().T) for H in Hk) / 64
        np.testing.assert_allclose(R0, expected, atol=1e-14)
        assert np.all(np.diag(R0) >= 0)

    def test_scalar_cosine(self):
        N, k0, f_c, f_s = 32, 3, 1.0, 8.0
        m = np.arange(20)
        R = autocov_x(np.ones((1, 1, 1)), N, N, [k0], f_c, f_s, m)[:, 0, 0]
        np.testing.assert_allclose(R, np.cos(2 * np.pi * (k0 / N + f_c / f_s) * m), atol=1e-12)

    def test_model_matches_free_function(self, small_channel):
        ks, lags = (63, 0, 1), np.arange(10)
        model = SecondOrderModel.from_channel(small_channel, ks, 64, 2.5e9, 10e9)
        np.testing.assert_allclose(model.autocov_x(lags), autocov_x(small_channel, 1.0, 64, ks, 2.5e9, 10e9, lags), atol=1e-15)

    def test_reference_config_monte_carlo(self):
        """Sample autocovariance of 1000 simulated RF frames, lags 0..32.

        Errors are measured relative to the zero-lag power, since several
        lags sit near a zero crossing of the carrier cosine. The first 8 of
        the 32 antennas are checked to keep the run short.
        """
        ch = draw_channel(32, 4, 1000, RandomStream(0, 5))
        lags = np.arange(33)
        acc = np.zeros((33, 8))
        for t in range(1000):
            sym = map_qam(RandomStream(0, (6, t)), 16, 1.0, 4, REF_SET)
            x = upconvert(apply_channel(sym, ch, 4096), 2.4e9, 10e9).samples[:, :8]
            acc += np.stack([np.mean(x[m:] * x[: 4096 - m], axis=0) for m in lags])
        est = acc / 1000
        R = np.einsum("mbb->mb", autocov_x(ch, 1.0, 4096, REF_SET, 2.4e9, 10e9, lags))[:, :8]
        assert np.max(np.abs(est - R) / R[0]) < 0.03


class TestNoiseAndGain:
    def test_noiseless_is_identity(self, rng):
        Rx = rng.standard_normal((4, 2, 2))
        np.testing.assert_array_equal(autocov_y(Rx, 0.0), Rx)

    def test_noise_shift(self, rng):
        Rx = rng.standard_normal((4, 2, 2))
        np.testing.assert_allclose(autocov_y(Rx, 2.0)[0] - Rx[0], np.eye(2))
        np.testing.assert_array_equal(autocov_y(Rx, 2.0)[1:], Rx[1:])

    def test_noise_plus_dither_shift(self, rng):
        Rx = rng.standard_normal((3, 2, 2))
        np.testing.assert_allclose(autocov_y(Rx, 1.0, 3.0)[0] - Rx[0], 2 * np.eye(2))

    def test_zero_lag_located_by_label(self, rng):
        Rx = rng.standard_normal((3, 2, 2))
        out = autocov_y(Rx, 2.0, lags=[5, 0, 1])
        np.testing.assert_allclose(out[1] - Rx[1], np.eye(2))

    def test_missing_zero_lag(self):
        with pytest.raises(InvalidArgumentError):
            autocov_y(np.zeros((2, 1, 1)), 1.0, lags=[1, 2])

    def test_signal_free_antenna(self):
        n = 0.37
        model = SecondOrderModel(np.zeros((1, 2, 1)), (0,), 16, 1.0, 4.0)
        np.testing.assert_allclose(model.gain(n), 2 / np.sqrt(np.pi * n))

    def test_unit_power(self):
        np.testing.assert_allclose(bussgang_gain(np.eye(3)), np.sqrt(2 / np.pi) * np.ones(3))
        assert np.sqrt(2 / np.pi) == pytest.approx(0.7979, abs=1e-4)

    def test_zero_power_raises(self):
        with pytest.raises(DegenerateInputError):
            bussgang_gain(np.array([1.0, 0.0]))


class TestArcsineLaw:
    def test_zero_lag_diagonal_is_one(self, small_channel):
        Rx = autocov_x(small_channel, 1.0, 64, (63, 0, 1), 2.5e9, 10e9, np.arange(4))
        Ry = autocov_y(Rx, 0.1)
        np.testing.assert_allclose(np.diag(arcsine_autocov(Ry, np.diag(Ry[0]))[0]), 1.0)

    def test_scalar_half(self):
        Ry = np.array([[[2.0]], [[1.0]]])
        np.testing.assert_allclose(arcsine_autocov(Ry, [2.0])[1, 0, 0], 1 / 3)

    def test_normalization_pins_diagonal(self):
        Ry = np.array([[[2.0 + 1e-13, 0.5], [0.5, 3.0]]])
        C = normalized_autocov(Ry, [2.0, 3.0])
        assert C[0, 0, 0] == 1.0 and C[0, 1, 1] == 1.0


class TestDistortion:
    def test_pure_noise(self):
        model = SecondOrderModel(np.zeros((2, 3, 1)), (0, 1), 32, 1.0, 4.0)
        Ce = model.distortion(0.5).cov
        for C in Ce:
            np.testing.assert_allclose(C, PURE_NOISE_DISTORTION * np.eye(3), atol=1e-14)

    @given(st.floats(0.01, 100.0))
    def test_scale_invariance(self, a):
        model, ch = small_model()
        scaled = SecondOrderModel.from_channel(ch, (63, 0, 1), 64, 2.5e9, 10e9, Es=a)
        np.testing.assert_allclose(scaled.distortion(0.1 * a).cov, model.distortion(0.1).cov, atol=1e-10)

    def test_infinite_dither_limit(self):
        model, _ = small_model()
        for C in model.distortion(1e12).cov:
            np.testing.assert_allclose(C, PURE_NOISE_DISTORTION * np.eye(3), atol=1e-6)
        assert np.all(model.gain(1e12) < 1e-5)

    def test_hermitian_psd(self):
        model, _ = small_model()
        for C in model.distortion(0.05).cov:
            np.testing.assert_allclose(C, C.conj().T, atol=1e-14)
            assert np.linalg.eigvalsh(C).min() > -1e-12

    def test_free_function_matches_model(self):
        model, ch = small_model()
        N0 = 0.2
        Ry = autocov_y(model.autocov_x(np.arange(64)), N0)
        Dy = np.diag(Ry[0])
        for i, k in enumerate((63, 0, 1)):
            for lag_sum in ("one_sided", "two_sided"):
                single = distortion_cov(Ry, Dy, k, 64, 2.5e9, 10e9, lag_sum)
                np.testing.assert_allclose(single.cov, model.distortion(N0, lag_sum=lag_sum).cov[i], atol=1e-12)

    def test_lag_sums_agree_when_periodic(self):
        model, _ = small_model()  # f_c N / f_s = 16
        one = model.distortion(0.1, lag_sum="one_sided")
        two = model.distortion(0.1, lag_sum="two_sided")
        np.testing.assert_allclose(one.cov, two.cov, atol=1e-12)
        assert np.max(one.antihermitian_residual) < 1e-12

    def test_batched_matches_single(self):
        model, _ = small_model()
        powers = [0.01, 0.3, 2.0]
        for p, d in zip(powers, model.distortion_many(powers)):
            np.testing.assert_array_equal(d.cov, model.distortion(p).cov)

    def test_chunking_invariant(self):
        _, ch = small_model()
        a = SecondOrderModel.from_channel(ch, (63, 0, 1), 64, 2.5e9, 10e9, chunk=7).distortion(0.1).cov
        b = SecondOrderModel.from_channel(ch, (63, 0, 1), 64, 2.5e9, 10e9, chunk=512).distortion(0.1).cov
        np.testing.assert_allclose(a, b, atol=1e-13)

    def test_bad_options(self):
        model, _ = small_model()
        with pytest.raises(InvalidArgumentError):
            model.distortion(0.1, lag_sum="both")
        with pytest.raises(InvalidArgumentError):
            model.distortion(0.1, max_lag=65)


class TestAnalyticalError:
    def test_infinite_resolution_reduces_to_zf(self):
        model, _ = small_model(B=4)
        N0 = 0.05
        Hk = model.Hk
        tr = sum(np.trace(np.linalg.inv(H.conj().T @ H)).real for H in Hk)
        expected = 100 * np.sqrt(N0 * tr / (1.0 * 2 * 3))
        assert model.error(N0, quantizer="infinite").evm_percent == pytest.approx(expected, rel=1e-12)

    def test_zero_dither_matches_undithered(self):
        model, _ = small_model()
        assert model.error(0.1, 0.0).numerator == model.error(0.1).numerator

    def test_gaussian_dither_equals_extra_noise(self):
        model, _ = small_model()
        assert model.error(0.1, 0.4).evm_percent == pytest.approx(model.error(0.5).evm_percent, rel=1e-12)

    def test_batched_errors(self):
        model, _ = small_model()
        pts = [(0.1, 0.0, "one_bit"), (0.1, 0.0, "infinite"), (0.02, 0.08, "one_bit")]
        batched = model.errors(pts)
        for p, e in zip(pts, batched):
            assert e.numerator == pytest.approx(model.error(*p).numerator, rel=1e-12)

    def test_pooled(self):
        model, _ = small_model()
        e = model.error(0.1)
        assert pooled_evm([e, e]) == pytest.approx(e.evm_percent)
        with pytest.raises(InvalidArgumentError):
            pooled_evm([])

    def test_unknown_quantizer(self):
        model, _ = small_model()
        with pytest.raises(UnsupportedModeError):
            model.error(0.1, quantizer="two_bit")

    def test_binary_dither_has_no_analytical_form(self):
        cfg = ExperimentConfig(B=4, U=2, N=64, occupied_set=(63, 0, 1), L=4, f_c=2.5e9, f_s=10e9, psd_segment_len=64,
                               dither_mode="uniform_binary", d0=0.1)
        _, ch = small_model(B=4)
        with pytest.raises(UnsupportedModeError):
            analytical_evm(ch, cfg)
        with pytest.raises(UnsupportedModeError):
            dithered_stats(ch, cfg)

    def test_dithered_stats_shift_zero_lag(self):
        cfg = ExperimentConfig(B=3, U=2, N=64, occupied_set=(63, 0, 1), L=4, f_c=2.5e9, f_s=10e9, psd_segment_len=64,
                               dither_mode="gaussian", d0=0.3, snr_db=10.0)
        _, ch = small_model()
        st_ = dithered_stats(ch, cfg)
        np.testing.assert_allclose(st_.Ry[0] - st_.Rx[0], (0.1 + 0.3) / 2 * np.eye(3), atol=1e-14)
        np.testing.assert_allclose(st_.G, bussgang_gain(st_.Dy))

    def test_analytical_evm_ignores_d0_without_dither(self):
        cfg = ExperimentConfig(B=3, U=2, N=64, occupied_set=(63, 0, 1), L=4, f_c=2.5e9, f_s=10e9, snr_db=5.0, psd_segment_len=64)
        _, ch = small_model()
        model = SecondOrderModel.from_channel(ch, (63, 0, 1), 64, 2.5e9, 10e9)
        assert analytical_evm(ch, cfg) == pytest.approx(model.error(10**-0.5).evm_percent)


class TestAnalyticalPsd:
    def test_white_is_flat(self):
        r = np.zeros((64, 2))
        r[0] = 1.0
        psd = analytical_psd(r, 1.0)
        np.testing.assert_allclose(psd.density[1:-1], 2.0)

    def test_windowed_white_is_flat(self):
        r = np.zeros((64, 2))
        r[0] = 1.0
        psd = analytical_psd(r, 1.0, segment_len=32)
        np.testing.assert_allclose(psd.density[1:-1], 2.0)
        assert len(psd.freqs) == 17

    def test_windowed_integrates_to_power(self):
        model, _ = small_model(N=256, ks=(255, 0, 1))
        r = model.output_autocov_diagonal(0.1)
        psd = analytical_psd(r, 10e9, segment_len=128)
        df = psd.freqs[1]
        assert np.sum(psd.density) * df == pytest.approx(1.0, rel=0.02)

    def test_windowed_nonnegative_for_aperiodic_lags(self):
        model, _ = small_model(N=256, ks=(255, 0, 1), f_c=2.41e9)
        psd = analytical_psd(model.output_autocov_diagonal(1e-4), 10e9, segment_len=256)
        assert psd.density.min() > 0

    def test_full_matrix_and_diagonal_agree(self):
        model, _ = small_model()
        st_ = model.stats(0.1)
        np.testing.assert_allclose(analytical_psd(st_.Rz, 10e9).density,
                                   analytical_psd(model.output_autocov_diagonal(0.1), 10e9).density, atol=1e-20)
