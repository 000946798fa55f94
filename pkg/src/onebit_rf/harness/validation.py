"""Oracle and invariant checks on small instances.

Each check compares an engine path against an independent computation
(brute-force sums, explicit convolution, or Monte Carlo) and reports the
observed error next to its tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..bussgang import SecondOrderModel, arcsine_autocov, autocov_x, autocov_y, bussgang_gain
from ..channel import draw_channel
from ..numerics import RandomStream, dft, idft
from ..quantizer import one_bit
from ..rxchain import ddc_matrix, zf_combiners
from ..txchain import RfFrame, apply_channel, map_qam, upconvert
from .config import ExperimentConfig


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.value < self.tolerance)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: {self.value:.3e} (tolerance {self.tolerance:.1e})"


@dataclass(frozen=True)
class SmallConfig:
    """Tiny Gaussian-input system for the statistical oracles.

    ``f_c N / f_s`` is an integer here, which makes the one-sided lag sum of
    the distortion covariance exact for the N-periodic input statistics.
    """

    B: int = 2
    U: int = 1
    N: int = 64
    L: int = 4
    subcarriers: tuple[int, ...] = (63, 0, 1)
    f_c: float = 2.5e9
    f_s: float = 10e9
    Es: float = 1.0
    snr_db: float = 20.0


def _small_channel(sc: SmallConfig, seed: int):
    return draw_channel(sc.B, sc.U, sc.L, RandomStream(seed, (90, 0)))


def _gaussian_frames(sc: SmallConfig, Hk, n_frames: int, rng: RandomStream):
    """Batch of noisy RF frames ``(T, N, B)`` driven by CN(0, Es) symbols."""
    S = len(sc.subcarriers)
    g = rng.standard_normal((2, n_frames, S, sc.U))
    s = (g[0] + 1j * g[1]) * np.sqrt(sc.Es / 2)
    X = np.zeros((n_frames, sc.N, sc.B), dtype=complex)
    X[:, list(sc.subcarriers)] = np.einsum("kbu,tku->tkb", Hk, s)
    xbb = np.fft.ifft(X, axis=1) * np.sqrt(sc.N)
    n = np.arange(sc.N)
    xrf = np.sqrt(2) * np.real(xbb * np.exp(2j * np.pi * (sc.f_c / sc.f_s) * n)[None, :, None])
    N0 = sc.Es / 10 ** (sc.snr_db / 10)
    return xrf + np.sqrt(N0 / 2) * rng.standard_normal(xrf.shape), N0


def check_dft_roundtrip(seed: int = 0) -> list[CheckResult]:
    rng = RandomStream(seed, (91, 0))
    x = rng.standard_normal(4096) + 1j * rng.standard_normal(4096)
    rt = np.max(np.abs(idft(dft(x)) - x))
    y = x[:16]
    n = np.arange(16)
    direct = np.array([np.sum(y * np.exp(-2j * np.pi * k * n / 16)) for k in range(16)])
    return [
        CheckResult("dft round trip (N=4096)", rt, 1e-12),
        CheckResult("dft vs direct sum (N=16)", np.max(np.abs(dft(y) - direct)), 1e-12),
    ]


def check_cp_equivalence(seed: int = 0) -> CheckResult:
    """Frequency-domain channel vs CP prepend, linear convolution, CP removal."""
    N, L, B, U = 64, 8, 2, 2
    S = tuple(range(0, 64, 3))
    ch = draw_channel(B, U, L, RandomStream(seed, (92, 0)))
    sym = map_qam(RandomStream(seed, (92, 1)), 16, 1.0, U, S)
    fast = apply_channel(sym, ch, N).samples
    grid = np.zeros((N, U), dtype=complex)
    grid[list(S)] = sym.values
    s = np.fft.ifft(grid, axis=0) * np.sqrt(N)
    tx = np.concatenate([s[N - (L - 1):], s])
    rx = np.zeros((len(tx) + L - 1, B), dtype=complex)
    for ell in range(L):
        rx[ell:ell + len(tx)] += tx @ ch.taps[ell].T
    slow = rx[L - 1:L - 1 + N]
    return CheckResult("CP / circular convolution equivalence", np.max(np.abs(fast - slow)), 1e-10)


def check_ddc_noise(seed: int = 0, n_frames: int = 10_000) -> CheckResult:
    """DDC of white noise with variance N0/2 has per-entry variance N0."""
    cfg = ExperimentConfig()
    B, N0 = 2, 0.3
    rng = RandomStream(seed, (93, 0))
    dmat = ddc_matrix(cfg.occupied_set, cfg.f_c, cfg.f_s, cfg.N)
    acc, count = 0.0, 0
    for start in range(0, n_frames, 500):
        w = np.sqrt(N0 / 2) * rng.standard_normal((min(500, n_frames - start), cfg.N, B))
        zb = dmat @ w
        acc += float(np.sum(np.abs(zb) ** 2))
        count += zb.size
    return CheckResult("DDC noise calibration (rel. error)", abs(acc / count / N0 - 1), 0.03)


def check_zf_left_inverse(seed: int = 0) -> CheckResult:
    cfg = ExperimentConfig()
    ch = draw_channel(cfg.B, cfg.U, cfg.L, RandomStream(seed, (94, 0)))
    Hk = ch.responses(cfg.occupied_set, cfg.N)
    model = SecondOrderModel(Hk, cfg.occupied_set, cfg.N, cfg.f_c, cfg.f_s)
    g = model.gain(cfg.noise_power(10.0))
    A = zf_combiners(Hk, g)
    err = max(np.max(np.abs(A[i] @ (g[:, None] * Hk[i]) - np.eye(cfg.U))) for i in range(len(Hk)))
    return CheckResult("ZF left inverse", err, 1e-10)


def check_bussgang_gain(seed: int = 0, n_frames: int = 250) -> list[CheckResult]:
    """Bussgang gain and orthogonality on the reference configuration (16-QAM).

    ``E[z_b y_b] / R_y[0]_bb`` is estimated per antenna from ``n_frames``
    frames (about 10^6 samples per antenna by default) and compared with
    ``G_bb``. Fewer frames leave the realized 16-QAM signal power visibly
    off its expectation.
    """
    cfg = ExperimentConfig()
    ch = draw_channel(cfg.B, cfg.U, cfg.L, RandomStream(seed, (95, 0)))
    N0 = cfg.noise_power(10.0)
    Hk = ch.responses(cfg.occupied_set, cfg.N)
    model = SecondOrderModel(Hk, cfg.occupied_set, cfg.N, cfg.f_c, cfg.f_s, cfg.E_s)
    Ry0 = model.input_power(N0)
    G = bussgang_gain(Ry0)
    zy = np.zeros(cfg.B)
    yy = np.zeros(cfg.B)
    ey = np.zeros(cfg.B)
    ee = np.zeros(cfg.B)
    for t in range(n_frames):
        sym = map_qam(RandomStream(seed, (95, 1, t)), cfg.qam_order, cfg.E_s, cfg.U, cfg.occupied_set)
        x = upconvert(apply_channel(sym, ch, cfg.N), cfg.f_c, cfg.f_s).samples
        y = x + np.sqrt(N0 / 2) * RandomStream(seed, (95, 2, t)).standard_normal(x.shape)
        z = one_bit(RfFrame(y)).samples
        e = z - G * y
        zy += np.sum(z * y, axis=0)
        yy += np.sum(y * y, axis=0)
        ey += np.sum(e * y, axis=0)
        ee += np.sum(e * e, axis=0)
    n = n_frames * cfg.N
    ratio = (zy / n) / Ry0
    corr = ey / np.sqrt(ee * yy)
    return [
        CheckResult("Bussgang gain Monte Carlo (max rel. error over antennas)", np.max(np.abs(ratio / G - 1)), 0.02),
        CheckResult("Bussgang orthogonality |corr(e, y)|", np.max(np.abs(corr)), 0.01),
    ]


def small_instance_statistics(sc: SmallConfig = SmallConfig(), n_frames: int = 100_000, seed: int = 0,
                              max_lag: int = 8) -> dict:
    """Monte Carlo 1-bit autocovariance and DDC distortion covariance on ``sc``."""
    ch = _small_channel(sc, seed)
    Hk = ch.responses(sc.subcarriers, sc.N)
    model = SecondOrderModel(Hk, sc.subcarriers, sc.N, sc.f_c, sc.f_s, sc.Es)
    rng = RandomStream(seed, (96, 0))
    N0 = sc.Es / 10 ** (sc.snr_db / 10)
    g = model.gain(N0)
    dmat = ddc_matrix(sc.subcarriers, sc.f_c, sc.f_s, sc.N)
    S = len(sc.subcarriers)
    rz = np.zeros((max_lag + 1, sc.B, sc.B))
    rz_count = np.zeros(max_lag + 1)
    ce = np.zeros((S, sc.B, sc.B), dtype=complex)
    done = 0
    while done < n_frames:
        t = min(5000, n_frames - done)
        y, _ = _gaussian_frames(sc, Hk, t, rng)
        z = np.where(y >= 0, 1.0, -1.0)
        for m in range(max_lag + 1):
            rz[m] += np.einsum("tnb,tnc->bc", z[:, m:], z[:, :sc.N - m])
            rz_count[m] += t * (sc.N - m)
        eb = dmat @ (z - g * y)
        ce += np.einsum("tkb,tkc->kbc", eb, eb.conj())
        done += t
    return {"model": model, "N0": N0, "Rz_mc": rz / rz_count[:, None, None], "Ce_mc": ce / n_frames}


def check_arcsine_and_distortion(sc: SmallConfig = SmallConfig(), n_frames: int = 100_000, seed: int = 0) -> list[CheckResult]:
    st = small_instance_statistics(sc, n_frames, seed)
    model, N0 = st["model"], st["N0"]
    lags = np.arange(st["Rz_mc"].shape[0])
    Ry = autocov_y(autocov_x(model.Hk, sc.Es, sc.N, sc.subcarriers, sc.f_c, sc.f_s, lags), N0, 0.0, lags)
    Rz = arcsine_autocov(Ry, np.diag(Ry[0]), lags)
    rz_err = np.max(np.abs(Rz - st["Rz_mc"])) / np.max(np.abs(Rz))
    Ce = model.distortion(N0).cov
    ce_err = max(np.linalg.norm(Ce[i] - st["Ce_mc"][i]) / np.linalg.norm(Ce[i]) for i in range(len(Ce)))
    return [
        CheckResult("arcsine law Monte Carlo, lags 0-8 (max rel. error)", rz_err, 0.02),
        CheckResult("distortion covariance Monte Carlo (max rel. Frobenius error)", ce_err, 0.05),
    ]


def run_oracle_suite(seed: int = 0) -> list[CheckResult]:
    results: list[CheckResult] = []
    results += check_dft_roundtrip(seed)
    results.append(check_cp_equivalence(seed))
    results.append(check_ddc_noise(seed))
    results.append(check_zf_left_inverse(seed))
    results += check_bussgang_gain(seed)
    results += check_arcsine_and_distortion(seed=seed)
    return results
