"""Frequency-selective Rayleigh channels with a uniform power delay profile."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .numerics import RandomStream


@dataclass
class ChannelRealization:
    """Time-domain taps ``H_0 .. H_{L-1}`` (shape ``(L, B, U)``) plus a cache
    of per-subcarrier frequency responses keyed by ``(k, N)``."""

    taps: np.ndarray
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    @property
    def n_taps(self) -> int:
        return self.taps.shape[0]

    @property
    def n_antennas(self) -> int:
        return self.taps.shape[1]

    @property
    def n_users(self) -> int:
        return self.taps.shape[2]

    def response(self, k: int, N: int) -> np.ndarray:
        key = (int(k), int(N))
        if key not in self._cache:
            self._cache[key] = freq_response(self.taps, k, N)
        return self._cache[key]

    def responses(self, subcarriers, N: int) -> np.ndarray:
        """Stacked responses for ``subcarriers``, shape ``(S, B, U)``."""
        subcarriers = [int(k) for k in subcarriers]
        missing = [k for k in subcarriers if (k, int(N)) not in self._cache]
        if missing:
            for k, H in zip(missing, freq_responses(self.taps, missing, N)):
                self._cache[(k, int(N))] = H
        return np.stack([self._cache[(k, int(N))] for k in subcarriers])


def draw_channel(B: int, U: int, L: int, rng: RandomStream) -> ChannelRealization:
    """Draw i.i.d. CN(0, 1/L) taps, so every entry of each ``H_k`` has unit power."""
    if min(B, U, L) < 1:
        raise InvalidArgumentError(f"dimensions must be positive, got B={B}, U={U}, L={L}")
    if B < U:
        raise InvalidArgumentError(f"need B >= U, got B={B}, U={U}")
    g = rng.standard_normal((2, L, B, U))
    taps = (g[0] + 1j * g[1]) / np.sqrt(2 * L)
    return ChannelRealization(taps)


def freq_responses(taps, subcarriers, N: int) -> np.ndarray:
    taps = np.asarray(taps)
    k = np.asarray(subcarriers, dtype=int)
    if np.any(k < 0) or np.any(k >= N):
        raise InvalidArgumentError(f"subcarrier index out of range [0, {N})")
    L = taps.shape[0]
    # exact tap-sum; k*l mod N keeps the phase argument small
    phase = np.exp(-2j * np.pi * (np.outer(k, np.arange(L)) % N) / N)
    # row-wise reduction, so a subcarrier's value does not depend on which
    # other subcarriers are evaluated alongside it (BLAS rounding would)
    flat = taps.reshape(L, -1)
    out = np.stack([(p[:, None] * flat).sum(axis=0) for p in phase]) if len(k) else np.empty((0, flat.shape[1]))
    return out.reshape((len(k),) + taps.shape[1:])


def freq_response(taps, k: int, N: int) -> np.ndarray:
    """Evaluate ``sum_l H_l exp(-2j pi k l / N)`` for a single subcarrier."""
    if not 0 <= k < N:
        raise InvalidArgumentError(f"subcarrier {k} out of range [0, {N})")
    return freq_responses(taps, [k], N)[0]
