"""Analytical second-order model of the 1-bit direct RF-sampling receiver.

The quantizer input is modelled as a stationary Gaussian process whose
autocovariance follows from the channel's per-subcarrier Gram matrices.
From it we get the diagonal Bussgang gain, the autocovariance of the 1-bit
output (arcsine law), the covariance of the in-band distortion after the
ideal DDC, and from those the EVM after ZF combining and the output PSD.

Lag sums are evaluated in chunks, so at most ``chunk`` lag matrices are
resident at once.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window

from .channel import ChannelRealization
from .errors import DegenerateInputError, InvalidArgumentError, UnsupportedModeError
from .numerics import elementwise_arcsine, pseudo_inverse
from .rxchain import PsdEstimate

log = logging.getLogger(__name__)

LAG_SUMS = ("one_sided", "two_sided")


def lag_phases(subcarriers, N: int, f_c: float, f_s: float, lags) -> np.ndarray:
    """``exp(2j pi (k/N + f_c/f_s) m)`` with shape ``(len(lags), S)``."""
    k = np.asarray(subcarriers, dtype=np.int64)
    m = np.asarray(lags, dtype=np.int64)
    cycles = np.mod(np.outer(m, k), N) / N + np.mod((f_c / f_s) * m, 1.0)[:, None]
    return np.exp(2j * np.pi * cycles)


def _responses(ch, subcarriers, N) -> np.ndarray:
    if isinstance(ch, ChannelRealization):
        return ch.responses(subcarriers, N)
    Hk = np.asarray(ch)
    if Hk.ndim != 3 or Hk.shape[0] != len(subcarriers):
        raise InvalidArgumentError("need one frequency response per occupied subcarrier")
    return Hk


def autocov_x(ch, Es: float, N: int, S_set, f_c: float, f_s: float, lags) -> np.ndarray:
    """Noiseless RF autocovariance ``Re{(Es/N) sum_k H_k H_k^H exp(j theta_k m)}``.

    ``ch`` is a :class:`ChannelRealization` or a stack of responses ``(S, B, U)``.
    Returns real matrices of shape ``(len(lags), B, B)``.
    """
    S = tuple(int(k) for k in S_set)
    Hk = _responses(ch, S, N)
    gram = np.einsum("kbu,kcu->kbc", Hk, Hk.conj())
    B = gram.shape[1]
    E = lag_phases(S, N, f_c, f_s, lags)
    R = np.ascontiguousarray(E.real) @ gram.real.reshape(len(S), -1) - np.ascontiguousarray(E.imag) @ gram.imag.reshape(len(S), -1)
    return (Es / N) * R.reshape(-1, B, B)


def autocov_y(Rx, N0: float, D0: float = 0.0, lags=None) -> np.ndarray:
    """Add the white noise-plus-dither power ``(N0 + D0)/2`` at lag zero only."""
    if N0 < 0 or D0 < 0:
        raise InvalidArgumentError(f"noise and dither powers must be >= 0, got N0={N0}, D0={D0}")
    Ry = np.array(Rx, dtype=float, copy=True)
    lags = np.arange(len(Ry)) if lags is None else np.asarray(lags)
    zero = np.flatnonzero(lags == 0)
    if zero.size == 0:
        raise InvalidArgumentError("zero lag missing from autocovariance")
    B = Ry.shape[1]
    Ry[zero[0]] += (N0 + D0) / 2 * np.eye(B)
    return Ry


def _diag(D) -> np.ndarray:
    D = np.asarray(D, dtype=float)
    return np.diag(D) if D.ndim == 2 else D


def bussgang_gain(Ry0) -> np.ndarray:
    """Diagonal of ``G = sqrt(2/pi) D_y^{-1/2}``, returned as a length-B vector."""
    d = _diag(Ry0)
    if np.any(d <= 0):
        bad = np.flatnonzero(d <= 0).tolist()
        raise DegenerateInputError(f"zero input power on antennas {bad}; Bussgang gain undefined")
    return np.sqrt(2 / np.pi) / np.sqrt(d)


def normalized_autocov(Ry, Dy, lags=None) -> np.ndarray:
    """``D_y^{-1/2} R_y[m] D_y^{-1/2}`` with the zero-lag diagonal pinned to 1."""
    inv = 1.0 / np.sqrt(_diag(Dy))
    C = np.asarray(Ry, dtype=float) * inv[None, :, None] * inv[None, None, :]
    lags = np.arange(len(C)) if lags is None else np.asarray(lags)
    for i in np.flatnonzero(lags == 0):
        np.fill_diagonal(C[i], 1.0)
    return C


def arcsine_autocov(Ry, Dy, lags=None) -> np.ndarray:
    """Autocovariance of the 1-bit output, ``(2/pi) asin(D_y^{-1/2} R_y[m] D_y^{-1/2})``."""
    return (2 / np.pi) * elementwise_arcsine(normalized_autocov(Ry, Dy, lags))


@dataclass(frozen=True)
class DistortionCovariance:
    """Per-subcarrier distortion covariance ``(S, B, B)`` and its diagnostics.

    ``antihermitian_residual`` is the Frobenius norm of the discarded
    anti-Hermitian part relative to the full one-sided sum, per subcarrier
    (zero for the two-sided sum).
    """

    cov: np.ndarray
    antihermitian_residual: np.ndarray


def _hermitian_part(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    MH = np.conj(np.swapaxes(M, -1, -2))
    herm = (M + MH) / 2
    anti = np.linalg.norm((M - MH) / 2, axis=(-2, -1))
    resid = anti / np.maximum(np.linalg.norm(M, axis=(-2, -1)), np.finfo(float).tiny)
    return herm, resid


def _finish(zero_term, sum_pos, lag_sum):
    """Combine the m = 0 term and the weighted positive-lag sum."""
    if lag_sum == "one_sided":
        herm, resid = _hermitian_part(zero_term + sum_pos)
    else:
        herm = zero_term + sum_pos + np.conj(np.swapaxes(sum_pos, -1, -2))
        resid = np.zeros(herm.shape[0])
    return herm, resid


def distortion_cov(Ry, Dy, k: int, N: int, f_c: float, f_s: float, lag_sum: str = "one_sided") -> DistortionCovariance:
    """Covariance of the DDC output distortion on subcarrier ``k``.

    ``Ry`` holds lags ``0 .. M-1`` (``M <= N``; fewer lags truncate the sum).
    ``one_sided`` evaluates ``(4/pi) sum_{m=0}^{M-1} [asin(C[m]) - C[m]] e^{-j theta m}``
    and keeps the Hermitian part. ``two_sided`` adds the negative lags
    (``C[-m] = C[m]^T``) with Bartlett weights ``1 - |m|/N``, which is the
    exact covariance of the N-sample DDC sum of a stationary process.
    The Bussgang gain cancels in the normalized form, so it is not an input.
    """
    if lag_sum not in LAG_SUMS:
        raise InvalidArgumentError(f"lag_sum must be one of {LAG_SUMS}")
    Ry = np.asarray(Ry, dtype=float)
    M = len(Ry)
    C = normalized_autocov(Ry, Dy)
    F = elementwise_arcsine(C) - C
    m = np.arange(M)
    w = np.ones(M) if lag_sum == "one_sided" else 1.0 - m / N
    ph = np.conj(lag_phases([k], N, f_c, f_s, m)[:, 0])
    zero = (4 / np.pi) * F[0].astype(complex)
    pos = (4 / np.pi) * np.einsum("m,mbc->bc", w[1:] * ph[1:], F[1:])
    herm, resid = _finish(zero[None], pos[None], lag_sum)
    return DistortionCovariance(herm[0], resid)


@dataclass(frozen=True)
class SecondOrderStats:
    """Materialized statistics for lags ``0 .. M-1`` (shapes ``(M, B, B)``).

    ``Dy`` and ``G`` hold the diagonals of the corresponding diagonal matrices.
    """

    lags: np.ndarray
    Rx: np.ndarray
    Ry: np.ndarray
    Dy: np.ndarray
    Rz: np.ndarray
    G: np.ndarray
    Ce: np.ndarray
    subcarriers: tuple[int, ...]
    noise_power: float
    antihermitian_residual: np.ndarray


@dataclass(frozen=True)
class AnalyticalError:
    """Numerator and denominator of the squared EVM for one channel."""

    numerator: float
    denominator: float
    per_subcarrier: np.ndarray
    imag_residual: float

    @property
    def evm_percent(self) -> float:
        return 100.0 * float(np.sqrt(self.numerator / self.denominator))


def pooled_evm(errors) -> float:
    """EVM over several channels: root of summed numerators over summed denominators."""
    errors = list(errors)
    if not errors:
        raise InvalidArgumentError("no channel results to pool")
    return 100.0 * float(np.sqrt(sum(e.numerator for e in errors) / sum(e.denominator for e in errors)))


class SecondOrderModel:
    """Second-order model for one channel realization.

    Holds the per-subcarrier Gram matrices ``H_k H_k^H``; everything else is
    recomputed from them per call, streaming over lag chunks. One instance
    serves any number of noise/dither powers.
    """

    def __init__(self, Hk, subcarriers, N: int, f_c: float, f_s: float, Es: float = 1.0, chunk: int = 512):
        self.subcarriers = tuple(int(k) for k in subcarriers)
        self.Hk = np.asarray(Hk)
        if self.Hk.shape[0] != len(self.subcarriers):
            raise InvalidArgumentError("need one frequency response per occupied subcarrier")
        if not 0 < f_c < f_s / 2:
            raise InvalidArgumentError(f"need 0 < f_c < f_s/2, got f_c={f_c}, f_s={f_s}")
        self.N, self.f_c, self.f_s, self.Es = int(N), float(f_c), float(f_s), float(Es)
        self.chunk = int(chunk)
        self.gram = np.einsum("kbu,kcu->kbc", self.Hk, self.Hk.conj())
        self.B = self.gram.shape[1]
        self.U = self.Hk.shape[2]
        self._gram_re = self.gram.real.reshape(len(self.subcarriers), -1)
        self._gram_im = self.gram.imag.reshape(len(self.subcarriers), -1)

    @classmethod
    def from_channel(cls, ch: ChannelRealization, subcarriers, N, f_c, f_s, Es=1.0, **kw):
        return cls(ch.responses(subcarriers, N), subcarriers, N, f_c, f_s, Es, **kw)

    def autocov_x(self, lags) -> np.ndarray:
        E = lag_phases(self.subcarriers, self.N, self.f_c, self.f_s, lags)
        # contiguous operands keep the matmul on the BLAS fast path
        R = np.ascontiguousarray(E.real) @ self._gram_re - np.ascontiguousarray(E.imag) @ self._gram_im
        return (self.Es / self.N) * R.reshape(-1, self.B, self.B)

    def signal_power(self) -> np.ndarray:
        """Per-antenna noiseless RF power, the diagonal of ``R_x[0]``."""
        return (self.Es / self.N) * np.einsum("kbb->b", self.gram).real

    def input_power(self, noise_power: float) -> np.ndarray:
        """Diagonal of ``R_y[0]`` for total white power ``N0 + D0``."""
        if noise_power < 0:
            raise InvalidArgumentError("noise power must be >= 0")
        return self.signal_power() + noise_power / 2

    def gain(self, noise_power: float) -> np.ndarray:
        return bussgang_gain(self.input_power(noise_power))

    def _chunks(self, n_lags: int):
        for start in range(0, n_lags, self.chunk):
            yield np.arange(start, min(start + self.chunk, n_lags))

    def _normalized_chunk(self, lags, noise_power, inv_sqrt_d):
        return self._normalize(self.autocov_x(lags), lags, noise_power, inv_sqrt_d)

    def _normalize(self, Rx, lags, noise_power, inv_sqrt_d):
        R = Rx.copy() if lags[0] == 0 else Rx
        if lags[0] == 0:
            R[0] += noise_power / 2 * np.eye(self.B)
        C = R * inv_sqrt_d[None, :, None] * inv_sqrt_d[None, None, :]
        if lags[0] == 0:
            np.fill_diagonal(C[0], 1.0)
        return C

    def distortion(self, noise_power: float, max_lag: int | None = None, lag_sum: str = "one_sided") -> DistortionCovariance:
        """Distortion covariances for every occupied subcarrier, ``(S, B, B)``.

        ``max_lag`` truncates the lag sum to ``0 .. max_lag-1`` (default N).
        """
        return self.distortion_many([noise_power], max_lag, lag_sum)[0]

    def distortion_many(self, noise_powers, max_lag: int | None = None, lag_sum: str = "one_sided") -> list[DistortionCovariance]:
        """:meth:`distortion` for several noise powers, sharing one pass over ``R_x``."""
        if lag_sum not in LAG_SUMS:
            raise InvalidArgumentError(f"lag_sum must be one of {LAG_SUMS}")
        n_lags = self.N if max_lag is None else int(max_lag)
        if not 1 <= n_lags <= self.N:
            raise InvalidArgumentError(f"max_lag must lie in [1, {self.N}]")
        noise_powers = [float(p) for p in noise_powers]
        invs = [1.0 / np.sqrt(self.input_power(p)) for p in noise_powers]
        S, B, P = len(self.subcarriers), self.B, len(noise_powers)
        acc_re = np.zeros((P, S, B * B))
        acc_im = np.zeros((P, S, B * B))
        zero = [None] * P
        for lags in self._chunks(n_lags):
            Rx = self.autocov_x(lags)
            w = np.ones(len(lags)) if lag_sum == "one_sided" else 1.0 - lags / self.N
            E = np.conj(lag_phases(self.subcarriers, self.N, self.f_c, self.f_s, lags)) * w[:, None]
            # contiguous operands keep the matmul on the BLAS fast path
            Er, Ei = np.ascontiguousarray(E.real.T), np.ascontiguousarray(E.imag.T)
            for i, (p, inv) in enumerate(zip(noise_powers, invs)):
                C = self._normalize(Rx, lags, p, inv)
                F = (elementwise_arcsine(C) - C).reshape(len(lags), -1)
                if lags[0] == 0:
                    zero[i] = F[0].copy()
                    F[0] = 0.0
                acc_re[i] += Er @ F
                acc_im[i] += Ei @ F
        scale = 4 / np.pi
        out = []
        for i in range(P):
            zero_term = np.broadcast_to(scale * zero[i].reshape(B, B), (S, B, B)).astype(complex)
            pos = scale * (acc_re[i] + 1j * acc_im[i]).reshape(S, B, B)
            out.append(DistortionCovariance(*_finish(zero_term, pos, lag_sum)))
        return out

    def output_autocov_diagonal(self, noise_power: float) -> np.ndarray:
        """Diagonal of ``R_z[m]`` for all N lags, shape ``(N, B)``."""
        inv = 1.0 / np.sqrt(self.input_power(noise_power))
        out = np.empty((self.N, self.B))
        idx = np.arange(self.B)
        for lags in self._chunks(self.N):
            C = self._normalized_chunk(lags, noise_power, inv)
            out[lags] = (2 / np.pi) * elementwise_arcsine(C[:, idx, idx])
        return out

    def error(
        self,
        N0: float,
        D0: float = 0.0,
        quantizer: str = "one_bit",
        max_lag: int | None = None,
        lag_sum: str = "one_sided",
    ) -> AnalyticalError:
        """EVM numerator ``sum_k Re tr(A_k (N_eff G^2 + C_k) A_k^H)`` and denominator ``Es U S``.

        For ``quantizer="infinite"`` the gain is the identity and the
        distortion vanishes, leaving ZF noise enhancement only.
        """
        return self.errors([(N0, D0, quantizer)], max_lag, lag_sum)[0]

    def errors(self, points, max_lag: int | None = None, lag_sum: str = "one_sided") -> list[AnalyticalError]:
        """:meth:`error` for a sequence of ``(N0, D0, quantizer)`` points.

        All 1-bit points share a single pass over the input autocovariance.
        """
        points = [(float(n0), float(d0), q) for n0, d0, q in points]
        for n0, d0, q in points:
            if n0 < 0 or d0 < 0:
                raise InvalidArgumentError("noise and dither powers must be >= 0")
            if q not in ("one_bit", "infinite"):
                raise UnsupportedModeError(f"unknown quantizer {q!r}")
        one_bit = sorted({n0 + d0 for n0, d0, q in points if q == "one_bit"})
        dist = dict(zip(one_bit, self.distortion_many(one_bit, max_lag, lag_sum))) if one_bit else {}
        S = len(self.subcarriers)
        out = []
        for n0, d0, q in points:
            n_eff = n0 + d0
            if q == "infinite":
                g, Ce = np.ones(self.B), np.zeros((S, self.B, self.B))
            else:
                g, Ce = self.gain(n_eff), dist[n_eff].cov
            out.append(self._zf_error(g, Ce, n_eff))
        return out

    def _zf_error(self, g, Ce, n_eff) -> AnalyticalError:
        S = len(self.subcarriers)
        per_k = np.empty(S)
        imag = 0.0
        for i, k in enumerate(self.subcarriers):
            A = pseudo_inverse(g[:, None] * self.Hk[i], subcarrier=k)
            cov = Ce[i] + n_eff * np.diag(g * g)
            t = np.trace(A @ cov @ A.conj().T)
            per_k[i] = t.real
            imag = max(imag, abs(t.imag) / max(abs(t.real), np.finfo(float).tiny))
        if imag > 1e-2:
            log.warning("numerator trace has imaginary residual %.3g of its real part", imag)
        return AnalyticalError(float(per_k.sum()), self.Es * self.U * S, per_k, imag)

    def stats(self, N0: float, D0: float = 0.0, n_lags: int | None = None, lag_sum: str = "one_sided") -> SecondOrderStats:
        """Materialize all statistics for lags ``0 .. n_lags-1`` (default N).

        Memory grows as ``3 * n_lags * B^2`` floats; prefer the streaming
        methods for large configurations.
        """
        n_lags = self.N if n_lags is None else int(n_lags)
        lags = np.arange(n_lags)
        Rx = self.autocov_x(lags)
        Ry = autocov_y(Rx, N0, D0, lags)
        Dy = np.diag(Ry[0]).copy()
        Rz = arcsine_autocov(Ry, Dy, lags)
        dist = self.distortion(N0 + D0, max_lag=n_lags, lag_sum=lag_sum)
        return SecondOrderStats(
            lags, Rx, Ry, Dy, Rz, bussgang_gain(Dy), dist.cov, self.subcarriers,
            N0 + D0, dist.antihermitian_residual,
        )


def _cfg_model(ch, cfg, B=None) -> SecondOrderModel:
    if isinstance(ch, SecondOrderModel):
        return ch
    return SecondOrderModel.from_channel(ch, cfg.occupied_set, cfg.N, cfg.f_c, cfg.f_s, cfg.E_s)


def _effective_dither(cfg, d0):
    mode = cfg.dither_mode
    if d0 is None:
        d0 = cfg.dither_power
    if mode == "uniform_binary":
        raise UnsupportedModeError(
            "analytical EVM is only available for Gaussian or no dither; "
            "use the Monte Carlo engine for binary dither"
        )
    if mode == "none":
        return 0.0
    return float(d0)


def analytical_evm(ch, cfg, snr_db: float | None = None, d0: float | None = None, quantizer: str | None = None) -> float:
    """Closed-form EVM (percent) for a single channel under ``cfg``.

    ``cfg`` supplies ``E_s, N, occupied_set, f_c, f_s``, the dither settings
    and the SNR (``snr_db`` overrides a scalar or takes one grid point).
    """
    model = _cfg_model(ch, cfg)
    snr = cfg.snr_scalar if snr_db is None else snr_db
    N0 = cfg.E_s / 10 ** (snr / 10)
    return model.error(N0, _effective_dither(cfg, d0), quantizer or cfg.quantizer).evm_percent


def dithered_stats(ch, cfg, snr_db: float | None = None, n_lags: int | None = None) -> SecondOrderStats:
    """Statistics with Gaussian dither: the dither power adds to N0 at lag zero."""
    if cfg.dither_mode != "gaussian":
        raise UnsupportedModeError(f"dithered statistics need Gaussian dither, got {cfg.dither_mode!r}")
    model = _cfg_model(ch, cfg)
    snr = cfg.snr_scalar if snr_db is None else snr_db
    N0 = cfg.E_s / 10 ** (snr / 10)
    return model.stats(N0, float(cfg.dither_power), n_lags=n_lags)


def analytical_psd(Rz, f_s: float, antenna_average: bool = True, segment_len: int | None = None) -> PsdEstimate:
    """One-sided PSD from the 1-bit output autocovariance over lags ``0 .. N-1``.

    ``Rz`` is either the full ``(N, B, B)`` stack or its diagonal ``(N, B)``.

    Without ``segment_len`` this evaluates ``Re{sum_m r[m] exp(-2j pi f m / f_s)}``
    over ``m = 0 .. N-1`` on the grid ``f = j f_s / N``, scaled to power per
    Hz. Unless ``f_c N / f_s`` is an integer the lags are not N-periodic and
    this truncated sum can dip below zero away from the signal band.

    With ``segment_len = M`` it returns the expected Hann-windowed periodogram
    of length-``M`` segments, i.e. the two-sided lag sum weighted by the
    window's normalized autocorrelation, on the grid ``f = j f_s / M``. That
    is what :func:`rxchain.empirical_psd` estimates, and it is nonnegative.
    """
    Rz = np.asarray(Rz, dtype=float)
    r = np.einsum("mbb->mb", Rz) if Rz.ndim == 3 else Rz
    if r.ndim == 1:
        r = r[:, None]
    N = r.shape[0]
    if segment_len is None:
        dens = np.fft.rfft(r, axis=0).real / f_s
        dens[1:(N + 1) // 2] *= 2  # fold negative frequencies; Nyquist bin appears once
        freqs = np.arange(dens.shape[0]) * f_s / N
    else:
        M = int(segment_len)
        if not 2 <= M <= N:
            raise InvalidArgumentError(f"segment_len must lie in [2, {N}]")
        h = get_window("hann", M)
        w = np.correlate(h, h, mode="full")[M - 1:] / np.dot(h, h)
        c = np.zeros((2 * M, r.shape[1]))
        c[:M] = w[:, None] * r[:M]
        c[M + 1:] = c[1:M][::-1]
        dens = np.fft.rfft(c, axis=0).real[::2] / f_s
        dens[1:(M + 1) // 2] *= 2
        freqs = np.arange(dens.shape[0]) * f_s / M
    if antenna_average:
        dens = dens.mean(axis=1)
    return PsdEstimate(freqs, dens, antenna_average)
