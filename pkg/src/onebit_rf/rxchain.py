"""Receive side: ideal digital down-conversion, ZF combining, empirical metrics."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy.signal import welch

from .channel import ChannelRealization
from .errors import InvalidArgumentError
from .numerics import pseudo_inverse
from .txchain import FrequencySymbols, RfFrame, carrier


@dataclass(frozen=True)
class BasebandSubcarriers:
    values: np.ndarray  # (S, B)
    subcarriers: tuple[int, ...]
    N: int


@dataclass(frozen=True)
class SymbolEstimates:
    values: np.ndarray  # (S, U)
    subcarriers: tuple[int, ...]


@dataclass(frozen=True)
class PsdEstimate:
    """One-sided power spectral density on ``[0, f_s/2]``.

    ``density`` is linear (power per Hz); shape ``(F,)`` when averaged over
    antennas, ``(F, B)`` otherwise.
    """

    freqs: np.ndarray
    density: np.ndarray
    antenna_averaged: bool = True

    def db(self, relative_to_peak: bool = False) -> np.ndarray:
        d = 10 * np.log10(np.maximum(self.density, np.finfo(float).tiny))
        if relative_to_peak:
            d = d - d.max(axis=0)
        return d

    def band_mean(self, f_lo: float, f_hi: float) -> float | np.ndarray:
        sel = (self.freqs >= f_lo) & (self.freqs <= f_hi)
        return self.density[sel].mean(axis=0)


@lru_cache(maxsize=16)
def _ddc_matrix(subcarriers: tuple[int, ...], f_c: float, f_s: float, N: int) -> np.ndarray:
    n = np.arange(N)
    k = np.asarray(subcarriers)
    bins = np.exp(-2j * np.pi * (np.outer(k, n) % N) / N)
    m = np.sqrt(2 / N) * bins * np.conj(carrier(N, f_c, f_s))[None, :]
    m.setflags(write=False)
    return m


def ddc_matrix(S_set, f_c: float, f_s: float, N: int) -> np.ndarray:
    """``(S, N)`` matrix mapping RF samples to the down-converted subcarriers."""
    S = tuple(int(k) for k in S_set)
    if any(not 0 <= k < N for k in S):
        raise InvalidArgumentError(f"occupied subcarrier index outside [0, {N})")
    return _ddc_matrix(S, float(f_c), float(f_s), int(N))


def ddc(z, S_set, f_c: float, f_s: float, N: int):
    """Ideal DDC: ``sqrt(2/N) sum_n z_n exp(-2j pi (k/N + f_c/f_s) n)`` for k in S.

    ``z`` is an :class:`RfFrame` (returns :class:`BasebandSubcarriers`) or a
    raw array of shape ``(..., N, B)`` (returns an array ``(..., S, B)``).
    """
    samples = z.samples if isinstance(z, RfFrame) else np.asarray(z)
    if samples.shape[-2] != N:
        raise InvalidArgumentError(f"frame length {samples.shape[-2]} does not match N={N}")
    out = ddc_matrix(S_set, f_c, f_s, N) @ samples
    if isinstance(z, RfFrame):
        return BasebandSubcarriers(out, tuple(int(k) for k in S_set), N)
    return out


def _gain_vector(G, B: int) -> np.ndarray:
    G = np.asarray(G, dtype=float)
    if G.ndim == 2:
        if np.any(G - np.diag(np.diag(G))):
            raise InvalidArgumentError("Bussgang gain must be diagonal")
        G = np.diag(G)
    G = np.broadcast_to(G, (B,))
    if np.any(G <= 0):
        raise InvalidArgumentError("Bussgang gain entries must be positive")
    return G


def zf_combiners(Hk: np.ndarray, G, subcarriers: Sequence[int] | None = None) -> np.ndarray:
    """Stack of ``A_k = (G H_k)^+`` with shape ``(S, U, B)``."""
    g = _gain_vector(G, Hk.shape[1])
    ks = subcarriers if subcarriers is not None else range(len(Hk))
    return np.stack([pseudo_inverse(g[:, None] * H, subcarrier=k) for k, H in zip(ks, Hk)])


def zf_combine(zbb: BasebandSubcarriers, ch: ChannelRealization, G, combiners=None) -> SymbolEstimates:
    """Zero-forcing estimates ``s_k = (G H_k)^+ z_k`` with perfect CSI.

    ``G`` is the diagonal Bussgang gain (vector or matrix); pass ones for
    the infinite-resolution baseline. Precomputed ``combiners`` skip the
    pseudo-inverses.
    """
    if combiners is None:
        Hk = ch.responses(zbb.subcarriers, zbb.N)
        combiners = zf_combiners(Hk, G, zbb.subcarriers)
    est = np.einsum("kub,kb->ku", combiners, zbb.values)
    return SymbolEstimates(est, zbb.subcarriers)


@dataclass
class EvmAccumulator:
    """Running sums of error and reference energy; merges associatively."""

    error_energy: float = 0.0
    symbol_energy: float = 0.0
    count: int = 0

    def add(self, estimate, truth) -> "EvmAccumulator":
        est = getattr(estimate, "values", estimate)
        ref = getattr(truth, "values", truth)
        self.error_energy += float(np.sum(np.abs(est - ref) ** 2))
        self.symbol_energy += float(np.sum(np.abs(ref) ** 2))
        self.count += 1
        return self

    def merge(self, other: "EvmAccumulator") -> "EvmAccumulator":
        return EvmAccumulator(
            self.error_energy + other.error_energy,
            self.symbol_energy + other.symbol_energy,
            self.count + other.count,
        )

    @property
    def percent(self) -> float:
        if self.count == 0 or self.symbol_energy == 0:
            raise InvalidArgumentError("EVM of an empty collection is undefined")
        return 100.0 * np.sqrt(self.error_energy / self.symbol_energy)


def empirical_evm(estimates: Iterable[SymbolEstimates], truths: Iterable[FrequencySymbols]) -> float:
    """Pooled EVM in percent: root of total error energy over total symbol energy."""
    if isinstance(estimates, SymbolEstimates):
        estimates, truths = [estimates], [truths]
    estimates, truths = list(estimates), list(truths)
    if len(estimates) != len(truths):
        raise InvalidArgumentError("estimates and truths have different lengths")
    acc = EvmAccumulator()
    for est, ref in zip(estimates, truths):
        acc.add(est, ref)
    return acc.percent


def empirical_psd(frames, segment_len: int, f_s: float, antenna_average: bool = True) -> PsdEstimate:
    """Welch PSD (Hann window, 50 % overlap) averaged over frames and antennas.

    Density scaling is one-sided, so the integral over ``[0, f_s/2]`` equals
    the mean-square sample value.
    """
    if isinstance(frames, RfFrame) or (isinstance(frames, np.ndarray) and frames.ndim == 2):
        frames = [frames]
    total = None
    n_frames = 0
    for frame in frames:
        x = frame.samples if isinstance(frame, RfFrame) else np.asarray(frame)
        if x.ndim == 1:
            x = x[:, None]
        N = x.shape[0]
        if segment_len > N:
            raise InvalidArgumentError(f"segment length {segment_len} exceeds frame length {N}")
        if segment_len < 2 or segment_len & (segment_len - 1):
            raise InvalidArgumentError(f"segment length must be a power of two, got {segment_len}")
        freqs, pxx = welch(
            x, fs=f_s, window="hann", nperseg=segment_len, noverlap=segment_len // 2,
            detrend=False, scaling="density", axis=0,
        )
        total = pxx if total is None else total + pxx
        n_frames += 1
    if n_frames == 0:
        raise InvalidArgumentError("no frames given")
    density = total / n_frames
    if antenna_average:
        density = density.mean(axis=1)
    return PsdEstimate(freqs, density, antenna_average)


def export_constellation(estimates) -> list[tuple[int, int, int, int, complex]]:
    """Flatten ``estimates[trial][symbol]`` to ``(trial, symbol, subcarrier, user, point)``.

    Ordering is trial, symbol, subcarrier (in the occupied-set order), user.
    """
    if isinstance(estimates, SymbolEstimates):
        estimates = [[estimates]]
    points = []
    for t, per_trial in enumerate(estimates):
        if isinstance(per_trial, SymbolEstimates):
            per_trial = [per_trial]
        for s, est in enumerate(per_trial):
            for i, k in enumerate(est.subcarriers):
                for u, p in enumerate(est.values[i]):
                    points.append((t, s, int(k), u, complex(p)))
    return points
