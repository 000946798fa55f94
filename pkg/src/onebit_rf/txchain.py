"""Transmit side: QAM symbols, OFDM modulation, channel, up-conversion, noise and dither."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization
from .errors import InvalidArgumentError
from .numerics import RandomStream

QAM_ORDERS = (4, 16, 64, 256)
DITHER_MODES = ("none", "uniform_binary", "gaussian")


@dataclass(frozen=True)
class FrequencySymbols:
    """Per-subcarrier user symbols ``s_k``; ``values`` has shape ``(S, U)``.

    ``order`` is the QAM order, or ``None`` for circularly-symmetric
    Gaussian symbols (used by the statistical oracles).
    """

    values: np.ndarray
    subcarriers: tuple[int, ...]
    order: int | None
    Es: float
    labels: np.ndarray | None = None

    @property
    def n_users(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class BasebandFrame:
    samples: np.ndarray  # (N, B) complex envelope


@dataclass(frozen=True)
class RfFrame:
    """Real RF samples, shape ``(N, B)``.

    ``stage`` is ``"analog"`` before quantization, ``"one_bit"`` after the
    1-bit quantizer, ``"infinite"`` after the passthrough.
    """

    samples: np.ndarray
    stage: str = "analog"


@dataclass(frozen=True)
class DitherSpec:
    mode: str = "none"
    d0: float = 0.0

    def __post_init__(self):
        if self.mode not in DITHER_MODES:
            raise InvalidArgumentError(f"unknown dither mode {self.mode!r}")
        if self.d0 < 0:
            raise InvalidArgumentError(f"dither power must be >= 0, got {self.d0}")
        if self.mode == "none" and self.d0 != 0:
            raise InvalidArgumentError("dither mode 'none' requires d0 = 0")


def _gray(i: int) -> int:
    return i ^ (i >> 1)


def qam_constellation(order: int, Es: float = 1.0) -> np.ndarray:
    """Square Gray-labeled QAM points indexed by label, average energy ``Es``.

    The upper half of the label bits selects the in-phase level and the
    lower half the quadrature level; neighbours on each axis differ in one bit.
    """
    if order not in QAM_ORDERS:
        raise InvalidArgumentError(f"unsupported QAM order {order}; choose from {QAM_ORDERS}")
    m = int(round(np.sqrt(order)))
    half = m.bit_length() - 1
    points = np.empty(order, dtype=complex)
    for i in range(m):
        for q in range(m):
            points[(_gray(i) << half) | _gray(q)] = (2 * i - m + 1) + 1j * (2 * q - m + 1)
    # mean energy of the odd-integer grid is 2(m^2 - 1)/3
    return points * np.sqrt(Es / (2 * (m * m - 1) / 3))


def _check_subcarriers(S_set, N: int | None = None) -> tuple[int, ...]:
    S = tuple(int(k) for k in S_set)
    if not S:
        raise InvalidArgumentError("occupied subcarrier set is empty")
    if len(set(S)) != len(S):
        raise InvalidArgumentError("occupied subcarrier set has duplicates")
    if min(S) < 0 or (N is not None and max(S) >= N):
        raise InvalidArgumentError(f"occupied subcarrier index outside [0, {N})")
    return S


def map_qam(rng: RandomStream, order: int, Es: float, U: int, S_set) -> FrequencySymbols:
    """Uniform i.i.d. QAM symbols for ``U`` users on the occupied subcarriers."""
    S = _check_subcarriers(S_set)
    points = qam_constellation(order, Es)
    labels = rng.integers(order, (len(S), U))
    return FrequencySymbols(points[labels], S, order, float(Es), labels)


def gaussian_symbols(rng: RandomStream, Es: float, U: int, S_set) -> FrequencySymbols:
    S = _check_subcarriers(S_set)
    g = rng.standard_normal((2, len(S), U))
    return FrequencySymbols((g[0] + 1j * g[1]) * np.sqrt(Es / 2), S, None, float(Es))


def _place(values: np.ndarray, subcarriers, N: int) -> np.ndarray:
    S = _check_subcarriers(subcarriers, N)
    grid = np.zeros((N,) + values.shape[1:], dtype=complex)
    grid[list(S)] = values
    return grid


def ofdm_modulate(symbols: FrequencySymbols, N: int) -> np.ndarray:
    """Time samples ``s_n = N^{-1/2} sum_{k in S} s_k exp(2j pi k n / N)``, shape ``(N, U)``."""
    grid = _place(symbols.values, symbols.subcarriers, N)
    return np.fft.ifft(grid, axis=0) * np.sqrt(N)


def apply_channel(symbols: FrequencySymbols, ch: ChannelRealization, N: int) -> BasebandFrame:
    """Noiseless complex envelope at the B antennas over the N post-CP samples.

    With a cyclic prefix of at least L-1 samples, the linear convolution seen
    after CP removal is circular, so the channel acts per subcarrier.
    """
    if ch.n_users != symbols.n_users:
        raise InvalidArgumentError(
            f"channel has {ch.n_users} users but symbols have {symbols.n_users}"
        )
    if N < ch.n_taps:
        raise InvalidArgumentError(f"need N >= L, got N={N}, L={ch.n_taps}")
    Hk = ch.responses(symbols.subcarriers, N)
    X = np.einsum("kbu,ku->kb", Hk, symbols.values)
    grid = _place(X, symbols.subcarriers, N)
    return BasebandFrame(np.fft.ifft(grid, axis=0) * np.sqrt(N))


def carrier(N: int, f_c: float, f_s: float) -> np.ndarray:
    """``exp(2j pi (f_c/f_s) n)`` for n = 0..N-1."""
    if not 0 < f_c < f_s / 2:
        raise InvalidArgumentError(f"need 0 < f_c < f_s/2, got f_c={f_c}, f_s={f_s}")
    cycles = np.mod((f_c / f_s) * np.arange(N), 1.0)
    return np.exp(2j * np.pi * cycles)


def upconvert(bb: BasebandFrame, f_c: float, f_s: float) -> RfFrame:
    x = np.asarray(bb.samples)
    rf = np.sqrt(2) * np.real(x * carrier(x.shape[0], f_c, f_s)[:, None])
    return RfFrame(rf, stage="analog")


def draw_dither(shape, dither: DitherSpec, rng: RandomStream) -> np.ndarray:
    if dither.mode == "none" or dither.d0 == 0:
        return np.zeros(shape)
    amp = np.sqrt(dither.d0 / 2)
    if dither.mode == "uniform_binary":
        return amp * (2.0 * rng.integers(2, shape) - 1.0)
    return amp * rng.standard_normal(shape)


def add_noise_and_dither(
    rf: RfFrame,
    N0: float,
    dither: DitherSpec | None = None,
    rng: RandomStream | None = None,
    dither_rng: RandomStream | None = None,
) -> RfFrame:
    """Add AWGN of variance ``N0/2`` per real sample, then the dither.

    Noise and dither come from ``rng`` unless ``dither_rng`` is given, in
    which case the dither uses its own substream.
    """
    dither = dither or DitherSpec()
    if N0 < 0:
        raise InvalidArgumentError(f"noise power must be >= 0, got {N0}")
    y = np.array(rf.samples, dtype=float, copy=True)
    if N0 > 0:
        y += np.sqrt(N0 / 2) * rng.standard_normal(y.shape)
    if dither.mode != "none":
        y += draw_dither(y.shape, dither, dither_rng or rng)
    return RfFrame(y, stage="analog")
