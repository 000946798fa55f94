import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from onebit_rf.channel import draw_channel
from onebit_rf.errors import InvalidArgumentError
from onebit_rf.numerics import RandomStream, pseudo_inverse
from onebit_rf.rxchain import (
    BasebandSubcarriers,
    EvmAccumulator,
    SymbolEstimates,
    ddc,
    empirical_evm,
    empirical_psd,
    export_constellation,
    zf_combine,
    zf_combiners,
)
from onebit_rf.txchain import RfFrame, add_noise_and_dither, apply_channel, map_qam, qam_constellation, upconvert

REF_SET = (4092, 4093, 4094, 4095, 0, 1, 2, 3, 4)
N, F_C, F_S = 4096, 2.4e9, 10e9


@pytest.fixture(scope="module")
def reference_chain():
    ch = draw_channel(8, 4, 1000, RandomStream(0, 1))
    sym = map_qam(RandomStream(0, 2), 16, 1.0, 4, REF_SET)
    rf = upconvert(apply_channel(sym, ch, N), F_C, F_S)
    return ch, sym, rf


class TestDdc:
    def test_recovers_channel_output(self, reference_chain):
        ch, sym, rf = reference_chain
        z = ddc(rf, REF_SET, F_C, F_S, N)
        expected = np.einsum("kbu,ku->kb", ch.responses(REF_SET, N), sym.values)
        assert np.linalg.norm(z.values - expected) / np.linalg.norm(expected) < 1e-3

    def test_zero_frame(self):
        z = ddc(RfFrame(np.zeros((64, 2))), [0, 1], 2.5e9, 10e9, 64)
        np.testing.assert_array_equal(z.values, 0)

    def test_noise_calibration(self):
        N0, frames = 0.3, 2000
        y = add_noise_and_dither(RfFrame(np.zeros((frames, N, 2))), N0, rng=RandomStream(9)).samples
        z = ddc(y, REF_SET, F_C, F_S, N)
        assert np.mean(np.abs(z) ** 2) == pytest.approx(N0, rel=0.03)

    def test_array_and_frame_inputs_agree(self, reference_chain):
        _, _, rf = reference_chain
        np.testing.assert_array_equal(ddc(rf, REF_SET, F_C, F_S, N).values, ddc(rf.samples, REF_SET, F_C, F_S, N))

    def test_length_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            ddc(RfFrame(np.zeros((32, 1))), [0], 1.0, 4.0, 64)


class TestZeroForcing:
    def test_left_inverse(self, small_channel, rng):
        ks = (1, 2, 3)
        Hk = small_channel.responses(ks, 64)
        g = np.array([0.5, 0.7, 0.9, 1.1])
        v = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
        z = np.einsum("b,kbu,ku->kb", g, Hk, v)
        est = zf_combine(BasebandSubcarriers(z, ks, 64), small_channel, g)
        assert np.max(np.abs(est.values - v)) < 1e-10

    def test_matrix_and_vector_gain_agree(self, small_channel):
        Hk = small_channel.responses((5,), 64)
        g = np.array([0.5, 0.7, 0.9, 1.1])
        np.testing.assert_allclose(zf_combiners(Hk, g), zf_combiners(Hk, np.diag(g)))

    def test_non_diagonal_gain_rejected(self, small_channel):
        with pytest.raises(InvalidArgumentError):
            zf_combiners(small_channel.responses((5,), 64), np.ones((4, 4)))

    def test_linearity(self, small_channel, rng):
        z = rng.standard_normal((2, 4)) + 1j * rng.standard_normal((2, 4))
        a = zf_combine(BasebandSubcarriers(z, (0, 1), 64), small_channel, 1.0)
        b = zf_combine(BasebandSubcarriers(2 * z, (0, 1), 64), small_channel, 1.0)
        np.testing.assert_allclose(b.values, 2 * a.values)

    def test_noiseless_chain_recovers_symbols(self, reference_chain):
        ch, sym, rf = reference_chain
        est = zf_combine(ddc(rf, REF_SET, F_C, F_S, N), ch, np.ones(8))
        assert np.linalg.norm(est.values - sym.values) / np.linalg.norm(sym.values) < 1e-3
        grid = qam_constellation(16)
        assert np.max(np.min(np.abs(est.values.ravel()[:, None] - grid[None]), axis=1)) < 1e-3

    def test_combiners_match_pseudo_inverse(self, small_channel):
        Hk = small_channel.responses((3, 4), 64)
        A = zf_combiners(Hk, 1.0)
        np.testing.assert_allclose(A[1], pseudo_inverse(Hk[1]))


class TestEvm:
    def test_zero_error(self, rng):
        s = rng.standard_normal((9, 4)) + 0j
        assert empirical_evm(SymbolEstimates(s, tuple(range(9))), SymbolEstimates(s, tuple(range(9)))) == 0.0

    def test_ten_percent(self, rng):
        s = np.exp(2j * np.pi * rng.uniform(size=(9, 4)))
        est = s * (1 + 0.1j)
        assert empirical_evm([SymbolEstimates(est, ())], [SymbolEstimates(s, ())]) == pytest.approx(10.0)

    @given(st.lists(st.tuples(st.floats(0, 10), st.floats(0.1, 10)), min_size=2, max_size=8))
    def test_merge_is_pooled(self, parts):
        accs = [EvmAccumulator(e, s, 1) for e, s in parts]
        merged = accs[0]
        for a in accs[1:]:
            merged = merged.merge(a)
        total = 100 * np.sqrt(sum(e for e, _ in parts) / sum(s for _, s in parts))
        assert merged.percent == pytest.approx(total)
        assert merged.count == len(parts)

    def test_empty_rejected(self):
        with pytest.raises(InvalidArgumentError):
            EvmAccumulator().percent


class TestPsd:
    def test_white_noise_flat(self):
        x = RandomStream(0).standard_normal((1000 * 256 // 2 + 128, 1))  # 1000 segments
        psd = empirical_psd(RfFrame(x), 256, 1.0)
        inner = psd.density[1:-1]
        assert np.max(np.abs(10 * np.log10(inner / inner.mean()))) < 1.0

    def test_integrates_to_power(self):
        x = 3.0 * RandomStream(1).standard_normal((8192, 2))
        psd = empirical_psd(RfFrame(x), 1024, 2.0)
        df = psd.freqs[1] - psd.freqs[0]
        assert np.sum(psd.density) * df == pytest.approx(np.mean(x**2), rel=0.02)

    def test_tone_location(self):
        n = np.arange(4096)
        x = np.cos(2 * np.pi * n / 8)[:, None]
        psd = empirical_psd(RfFrame(x), 512, 8.0)
        assert psd.freqs[np.argmax(psd.density)] == pytest.approx(1.0)

    def test_per_antenna(self):
        x = np.column_stack([np.ones(64), 2 * np.ones(64)])
        psd = empirical_psd(RfFrame(x), 16, 1.0, antenna_average=False)
        assert psd.density.shape == (9, 2)

    @pytest.mark.parametrize("seg", [3, 100, 128])
    def test_bad_segment(self, seg):
        with pytest.raises(InvalidArgumentError):
            empirical_psd(RfFrame(np.zeros((64, 1))), seg, 1.0)

    def test_db_relative_to_peak(self):
        x = RandomStream(2).standard_normal((1024, 1))
        assert empirical_psd(RfFrame(x), 256, 1.0).db(relative_to_peak=True).max() == 0.0


class TestConstellationExport:
    def test_count_and_order(self):
        est = SymbolEstimates(np.arange(36).reshape(9, 4) + 0j, REF_SET)
        pts = export_constellation([[est]])
        assert len(pts) == 36
        assert pts[0] == (0, 0, 4092, 0, 0j)
        assert pts[5] == (0, 0, 4093, 1, 5 + 0j)

    def test_nested_trials(self):
        est = SymbolEstimates(np.ones((1, 1)) + 0j, (3,))
        pts = export_constellation([[est, est], [est]])
        assert [p[:2] for p in pts] == [(0, 0), (0, 1), (1, 0)]
