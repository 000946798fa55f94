"""Deterministic numeric kernels: DFTs, pseudo-inverse, arcsine, seeded streams."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import DomainError, InvalidArgumentError, SingularMatrixError

RANK_TOLERANCE = 1e-12
ARCSINE_CLIP_TOLERANCE = 1e-9


def _as_sequence(x) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.ndim != 1 or x.size == 0:
        raise InvalidArgumentError("expected a non-empty 1-D sequence")
    return x


def dft(x) -> np.ndarray:
    """Unnormalized forward DFT, ``X_k = sum_n x_n exp(-2j pi k n / N)``."""
    return np.fft.fft(_as_sequence(x))


def idft(X) -> np.ndarray:
    """Inverse DFT with the 1/N factor, so that ``idft(dft(x)) == x``."""
    return np.fft.ifft(_as_sequence(X))


def pseudo_inverse(A, subcarrier: int | None = None) -> np.ndarray:
    """Left pseudo-inverse ``(A^H A)^{-1} A^H`` of a tall full-column-rank matrix.

    Rank is judged on the singular values: the smallest must be at least
    ``RANK_TOLERANCE`` times the largest, otherwise :class:`SingularMatrixError`
    is raised instead of silently regularizing.
    """
    A = np.asarray(A)
    if A.ndim != 2:
        raise InvalidArgumentError("pseudo_inverse expects a 2-D matrix")
    rows, cols = A.shape
    if rows < cols:
        raise InvalidArgumentError(f"matrix must be tall, got {rows}x{cols}")
    u, s, vh = np.linalg.svd(A, full_matrices=False)
    if s[0] == 0 or s[-1] < RANK_TOLERANCE * s[0]:
        raise SingularMatrixError("matrix is rank deficient", subcarrier=subcarrier)
    return (vh.conj().T / s) @ u.conj().T


def elementwise_arcsine(M) -> np.ndarray:
    """Entry-wise arcsine; overshoot of at most 1e-9 beyond +-1 is clipped."""
    M = np.asarray(M, dtype=float)
    excess = np.max(np.abs(M), initial=0.0) - 1.0
    if excess > ARCSINE_CLIP_TOLERANCE or np.isnan(excess):
        raise DomainError(
            f"arcsine argument exceeds unit magnitude by {excess:.3e}; "
            "normalized correlations are inconsistent"
        )
    return np.arcsin(np.clip(M, -1.0, 1.0))


def _stream_key(stream_id) -> tuple[int, ...]:
    if isinstance(stream_id, (int, np.integer)):
        return (int(stream_id),)
    return tuple(int(i) for i in stream_id)


@dataclass
class RandomStream:
    """A reproducible random substream identified by ``(master_seed, stream_id)``.

    ``stream_id`` is an integer or a tuple of integers (e.g. purpose tag,
    channel index, symbol index). Substreams are derived with
    :class:`numpy.random.SeedSequence` spawn keys, so distinct ids give
    statistically independent PCG64 streams. Instances are single-owner.
    """

    master_seed: int
    stream_id: int | tuple[int, ...] = 0
    _generator: np.random.Generator | None = field(default=None, init=False, repr=False)

    @property
    def generator(self) -> np.random.Generator:
        if self._generator is None:
            seq = np.random.SeedSequence(int(self.master_seed), spawn_key=_stream_key(self.stream_id))
            self._generator = np.random.Generator(np.random.PCG64(seq))
        return self._generator

    def standard_normal(self, size) -> np.ndarray:
        return self.generator.standard_normal(size)

    def integers(self, high: int, size) -> np.ndarray:
        return self.generator.integers(0, high, size=size)


class GaussianStream:
    """Unbounded iterator over standard-normal draws from a :class:`RandomStream`.

    Draws are produced in fixed-size blocks, so ``take(n)`` and repeated
    ``next()`` calls yield the same sequence.
    """

    block = 4096

    def __init__(self, rs: RandomStream):
        self._rs = rs
        self._buf = np.empty(0)
        self._pos = 0

    def __iter__(self) -> Iterator[float]:
        return self

    def __next__(self) -> float:
        return float(self.take(1)[0])

    def take(self, n: int) -> np.ndarray:
        out = np.empty(n)
        filled = 0
        while filled < n:
            if self._pos == self._buf.size:
                self._buf = self._rs.standard_normal(self.block)
                self._pos = 0
            step = min(n - filled, self._buf.size - self._pos)
            out[filled:filled + step] = self._buf[self._pos:self._pos + step]
            filled += step
            self._pos += step
        return out


def gaussian_stream(rs: RandomStream) -> GaussianStream:
    return GaussianStream(rs)
