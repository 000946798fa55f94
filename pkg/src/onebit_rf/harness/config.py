"""Experiment configuration."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ..errors import ConfigError
from ..txchain import DITHER_MODES, QAM_ORDERS

QUANTIZERS = ("one_bit", "infinite")

# four negative bins, DC, four positive bins
REFERENCE_OCCUPIED_SET = (4092, 4093, 4094, 4095, 0, 1, 2, 3, 4)


def _tuple(value, cast):
    if isinstance(value, (list, tuple)):
        return tuple(cast(v) for v in value)
    return cast(value)


def _as_int(v, name) -> int:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return int(v)
    if isinstance(v, str) and v.strip().lstrip("+-").isdigit():
        return int(v)
    if isinstance(v, bool) or float(v) != int(float(v)):
        raise ConfigError(f"{name} must be an integer, got {v!r}")
    return int(float(v))


@dataclass(frozen=True)
class ExperimentConfig:
    """All system scalars of one experiment.

    Defaults reproduce the reference setup: 32 antennas, 4 users, 4096
    samples per OFDM symbol, 9 occupied subcarriers, 1000 taps, 10 GS/s,
    2.4 GHz carrier, 16-QAM, 25 channels x 25 symbols.

    ``snr_db`` is a scalar or a grid. ``d0`` is a dither power or the string
    ``"optimize"``. ``B_sweep`` and ``sweep_modes`` (``"quantizer/dither"``
    strings) only matter for sweeps; they default to ``(B,)`` and the single
    mode given by ``quantizer`` / ``dither_mode``.
    """

    B: int = 32
    U: int = 4
    N: int = 4096
    occupied_set: tuple[int, ...] = REFERENCE_OCCUPIED_SET
    L: int = 1000
    f_c: float = 2.4e9
    f_s: float = 10e9
    E_s: float = 1.0
    snr_db: float | tuple[float, ...] = 10.0
    qam_order: int = 16
    quantizer: str = "one_bit"
    dither_mode: str = "none"
    d0: float | str = 0.0
    n_channels: int = 25
    n_symbols: int = 25
    master_seed: int = 0
    evm_threshold_lines: dict[str, float] = field(default_factory=dict)
    B_sweep: tuple[int, ...] | None = None
    sweep_modes: tuple[str, ...] | None = None
    psd_segment_len: int = 4096

    def __post_init__(self):
        set_ = object.__setattr__
        try:
            # YAML 1.1 reads "2.4e9" as a string, so coerce scalars explicitly
            for name in ("B", "U", "N", "L", "qam_order", "n_channels", "n_symbols", "master_seed", "psd_segment_len"):
                set_(self, name, _as_int(getattr(self, name), name))
            for name in ("f_c", "f_s", "E_s"):
                set_(self, name, float(getattr(self, name)))
            if self.d0 != "optimize":
                set_(self, "d0", float(self.d0))
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid numeric field: {exc}") from exc
        set_(self, "occupied_set", tuple(int(k) for k in self.occupied_set))
        set_(self, "snr_db", _tuple(self.snr_db, float))
        if self.B_sweep is not None:
            set_(self, "B_sweep", tuple(int(b) for b in self.B_sweep))
        if self.sweep_modes is not None:
            set_(self, "sweep_modes", tuple(str(m) for m in self.sweep_modes))
        set_(self, "evm_threshold_lines", {str(k): float(v) for k, v in dict(self.evm_threshold_lines).items()})
        self._validate()

    def _validate(self):
        for name in ("B", "U", "N", "L", "n_channels", "n_symbols"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for b in self.antenna_counts:
            if b < self.U:
                raise ConfigError(f"need B >= U, got B={b}, U={self.U}")
        if not self.occupied_set:
            raise ConfigError("occupied_set is empty")
        if len(set(self.occupied_set)) != len(self.occupied_set):
            raise ConfigError("occupied_set has duplicate indices")
        if min(self.occupied_set) < 0 or max(self.occupied_set) >= self.N:
            raise ConfigError(f"occupied_set must lie in [0, {self.N})")
        if not 0 < self.f_c < self.f_s / 2:
            raise ConfigError("need 0 < f_c < f_s/2 (first Nyquist zone)")
        if self.N < self.L:
            raise ConfigError(f"need N >= L, got N={self.N}, L={self.L}")
        if self.E_s <= 0:
            raise ConfigError("E_s must be positive")
        if self.qam_order not in QAM_ORDERS:
            raise ConfigError(f"qam_order must be one of {QAM_ORDERS}")
        if not self.snr_grid:
            raise ConfigError("snr_db grid is empty")
        self._check_mode(self.quantizer, self.dither_mode)
        if isinstance(self.d0, str):
            if self.d0 != "optimize":
                raise ConfigError("d0 must be a number or 'optimize'")
        elif self.d0 < 0:
            raise ConfigError("d0 must be >= 0")
        elif self.dither_mode == "none" and self.d0 != 0:
            raise ConfigError("dither_mode 'none' requires d0 = 0")
        for m in self.modes:
            self._check_mode(*m)
        seg = self.psd_segment_len
        if seg < 2 or seg > self.N or seg & (seg - 1):
            raise ConfigError("psd_segment_len must be a power of two not exceeding N")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")

    @staticmethod
    def _check_mode(quantizer, dither_mode):
        if quantizer not in QUANTIZERS:
            raise ConfigError(f"quantizer must be one of {QUANTIZERS}, got {quantizer!r}")
        if dither_mode not in DITHER_MODES:
            raise ConfigError(f"dither mode must be one of {DITHER_MODES}, got {dither_mode!r}")

    @property
    def S(self) -> int:
        return len(self.occupied_set)

    @property
    def bandwidth_hz(self) -> float:
        return self.S / self.N * self.f_s

    @property
    def osr(self) -> float:
        return self.N / self.S

    @property
    def delay_spread_s(self) -> float:
        return self.L / self.f_s

    @property
    def snr_grid(self) -> tuple[float, ...]:
        return self.snr_db if isinstance(self.snr_db, tuple) else (self.snr_db,)

    @property
    def snr_scalar(self) -> float:
        if len(self.snr_grid) != 1:
            raise ConfigError("this operation needs a single SNR value")
        return self.snr_grid[0]

    @property
    def antenna_counts(self) -> tuple[int, ...]:
        return self.B_sweep or (self.B,)

    @property
    def modes(self) -> tuple[tuple[str, str], ...]:
        if not self.sweep_modes:
            return ((self.quantizer, self.dither_mode),)
        out = []
        for m in self.sweep_modes:
            q, _, d = m.partition("/")
            out.append((q, d or "none"))
        return tuple(out)

    @property
    def dither_power(self) -> float:
        if isinstance(self.d0, str):
            raise ConfigError("dither power is 'optimize'; run the optimizer first")
        return float(self.d0)

    def noise_power(self, snr_db: float) -> float:
        """``N0 = E_s / SNR``."""
        return self.E_s / 10 ** (snr_db / 10)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    def derived(self) -> dict[str, float]:
        return {
            "S": self.S,
            "bandwidth_hz": self.bandwidth_hz,
            "osr": self.osr,
            "delay_spread_s": self.delay_spread_s,
        }

    @classmethod
    def from_mapping(cls, data: dict[str, Any]) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**data)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        """Load a YAML (or JSON) key-value file whose keys are the field names."""
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc.strerror or exc}") from exc
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a mapping of config keys")
        return cls.from_mapping(data)
