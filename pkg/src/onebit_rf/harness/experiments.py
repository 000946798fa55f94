"""Monte Carlo orchestration: per-channel trials, sweeps, dither optimization, PSDs.

Every random draw comes from a substream keyed by ``(purpose tag, channel
index[, symbol index])`` under the master seed, so results do not depend on
the worker count or on which other quantities are simulated. The same
channels, symbols and unit-variance noise are reused across SNR points and
modes (common random numbers).
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..bussgang import AnalyticalError, SecondOrderModel, analytical_psd, pooled_evm
from ..channel import ChannelRealization, draw_channel
from ..errors import OneBitRfError, UnsupportedModeError
from ..numerics import RandomStream
from ..quantizer import QUANTIZERS
from ..rxchain import EvmAccumulator, PsdEstimate, SymbolEstimates, ddc_matrix, zf_combiners
from ..txchain import FrequencySymbols, RfFrame, apply_channel, map_qam, upconvert
from .config import ExperimentConfig

log = logging.getLogger(__name__)

# published substream tag table; append new purposes, never renumber
PURPOSE_TAGS = {"channel": 1, "symbols": 2, "noise": 3, "dither": 4}

D0_LOG10_RANGE = (-4.0, 4.0)
BINARY_GRID_SIZE = 25
REDUCED_TRIALS = 5
GOLDEN_TOL_DECADES = 0.01
GOLDEN_REL_TOL = 0.01

SWEEP_COLUMNS = (
    "B", "U", "snr_db", "quantizer", "dither_mode", "d0", "evm_empirical_pct",
    "evm_analytical_pct", "ci_halfwidth_pct", "n_channels", "n_symbols", "seed",
)


def substream(master_seed: int, purpose: str, *indices: int) -> RandomStream:
    return RandomStream(master_seed, (PURPOSE_TAGS[purpose],) + tuple(int(i) for i in indices))


@dataclass(frozen=True)
class OperatingPoint:
    snr_db: float
    quantizer: str = "one_bit"
    dither_mode: str = "none"
    d0: float = 0.0


@dataclass
class ChannelOutcome:
    """Per-point results of all symbols sent over one channel realization."""

    empirical: list[EvmAccumulator]
    analytical: list[AnalyticalError | None]
    estimates: list[list[SymbolEstimates]] | None = None
    truths: list[FrequencySymbols] | None = None
    psd_sum: list[np.ndarray] | None = None
    distortion_energy: list[float] | None = None
    signal_energy: list[float] | None = None


def channel_for(cfg: ExperimentConfig, B: int, c: int) -> ChannelRealization:
    return draw_channel(B, cfg.U, cfg.L, substream(cfg.master_seed, "channel", c))


def unit_dither(shape, mode: str, rng: RandomStream) -> np.ndarray:
    """Dither with ``D0 = 2`` (unit amplitude/variance), drawn as ``draw_dither`` does."""
    if mode == "uniform_binary":
        return 2.0 * rng.integers(2, shape) - 1.0
    return rng.standard_normal(shape)


def _points_gain(model: SecondOrderModel, p: OperatingPoint, N0: float) -> np.ndarray:
    if p.quantizer == "infinite":
        return np.ones(model.B)
    return model.gain(N0 + p.d0)


def simulate_channel(
    cfg: ExperimentConfig,
    B: int,
    c: int,
    points: list[OperatingPoint],
    *,
    empirical: bool = True,
    analytical: bool = True,
    keep_estimates: bool = False,
    n_symbols: int | None = None,
    psd_segment_len: int | None = None,
    track_distortion: bool = False,
) -> ChannelOutcome:
    """Run every operating point over channel ``c`` with ``n_symbols`` OFDM symbols."""
    try:
        return _simulate_channel(
            cfg, B, c, points, empirical, analytical, keep_estimates,
            n_symbols or cfg.n_symbols, psd_segment_len, track_distortion,
        )
    except OneBitRfError as exc:
        exc.args = (f"{exc} [B={B}, channel {c}, master_seed {cfg.master_seed}]",) + exc.args[1:]
        raise


def _simulate_channel(cfg, B, c, points, empirical, analytical, keep_estimates, n_symbols, psd_seg, track):
    from scipy.signal import welch

    ch = channel_for(cfg, B, c)
    S = cfg.occupied_set
    Hk = ch.responses(S, cfg.N)
    model = SecondOrderModel(Hk, S, cfg.N, cfg.f_c, cfg.f_s, cfg.E_s)
    N0s = [cfg.noise_power(p.snr_db) for p in points]
    gains = [_points_gain(model, p, n0) for p, n0 in zip(points, N0s)]

    wanted = [i for i, p in enumerate(points) if analytical and p.dither_mode != "uniform_binary"]
    analytic: list[AnalyticalError | None] = [None] * len(points)
    errs = model.errors([(N0s[i], points[i].d0, points[i].quantizer) for i in wanted])
    for i, e in zip(wanted, errs):
        analytic[i] = e

    out = ChannelOutcome([EvmAccumulator() for _ in points], analytic)
    if not empirical:
        return out
    combiners = [zf_combiners(Hk, g, S) for g in gains]
    dmat = ddc_matrix(S, cfg.f_c, cfg.f_s, cfg.N)
    if keep_estimates:
        out.estimates = [[] for _ in points]
        out.truths = []
    if psd_seg:
        out.psd_sum = [0.0 for _ in points]
    if track:
        out.distortion_energy = [0.0 for _ in points]
        out.signal_energy = [0.0 for _ in points]
    shape = (cfg.N, B)
    for s in range(n_symbols):
        symbols = map_qam(substream(cfg.master_seed, "symbols", c, s), cfg.qam_order, cfg.E_s, cfg.U, S)
        rf = upconvert(apply_channel(symbols, ch, cfg.N), cfg.f_c, cfg.f_s).samples
        noise = substream(cfg.master_seed, "noise", c, s).standard_normal(shape)
        dithers: dict[str, np.ndarray] = {}
        if keep_estimates:
            out.truths.append(symbols)
        for i, (p, n0) in enumerate(zip(points, N0s)):
            y = rf + math.sqrt(n0 / 2) * noise
            if p.dither_mode != "none" and p.d0 > 0:
                if p.dither_mode not in dithers:
                    dithers[p.dither_mode] = unit_dither(shape, p.dither_mode, substream(cfg.master_seed, "dither", c, s))
                y = y + math.sqrt(p.d0 / 2) * dithers[p.dither_mode]
            z = QUANTIZERS[p.quantizer](RfFrame(y)).samples
            zbb = dmat @ z
            est = np.einsum("kub,kb->ku", combiners[i], zbb)
            out.empirical[i].add(est, symbols.values)
            if keep_estimates:
                out.estimates[i].append(SymbolEstimates(est, S))
            if psd_seg:
                _, pxx = welch(z, fs=cfg.f_s, window="hann", nperseg=psd_seg, noverlap=psd_seg // 2,
                               detrend=False, scaling="density", axis=0)
                out.psd_sum[i] = out.psd_sum[i] + pxx.mean(axis=1)
            if track:
                g = gains[i]
                distortion = dmat @ (z - g * y)
                signal = g[None, :] * np.einsum("kbu,ku->kb", Hk, symbols.values)
                out.distortion_energy[i] += float(np.sum(np.abs(distortion) ** 2))
                out.signal_energy[i] += float(np.sum(np.abs(signal) ** 2))
    return out


def parallel_map(fn, items, threads: int = 1) -> list:
    """Ordered map; results are merged by index, so thread count never changes them."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def ci_halfwidth(err: np.ndarray, den: np.ndarray) -> float:
    """95 % normal-approximation half-width of pooled EVM from per-channel EVM^2 values."""
    if len(err) < 2:
        return float("nan")
    e2 = err / den
    mean = err.sum() / den.sum()
    hw = 1.96 * e2.std(ddof=1) / math.sqrt(len(e2))
    return 100.0 * hw / (2 * math.sqrt(mean)) if mean > 0 else float("nan")


@dataclass
class RunReport:
    """Tabular results plus the artifacts that accompany them.

    ``wall_time_s`` is informational and never written to files, so that
    outputs stay byte-reproducible.
    """

    config: ExperimentConfig
    rows: list[dict] = field(default_factory=list)
    crossings: list[dict] = field(default_factory=list)
    constellations: dict[str, list[tuple]] = field(default_factory=dict)
    psd: list[dict] = field(default_factory=list)
    dither: list[dict] = field(default_factory=list)
    artifacts: dict[str, str] = field(default_factory=dict)
    wall_time_s: float = 0.0

    def row(self, **match) -> dict:
        hits = [r for r in self.rows if all(r[k] == v for k, v in match.items())]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {match}")
        return hits[0]


def _row(cfg, B, p, emp, ana, n_channels, n_symbols) -> dict:
    if emp:
        err = np.array([a.error_energy for a in emp])
        den = np.array([a.symbol_energy for a in emp])
        evm_emp = 100.0 * math.sqrt(err.sum() / den.sum())
        ci = ci_halfwidth(err, den)
    else:
        evm_emp, ci = float("nan"), float("nan")
    evm_ana = pooled_evm(ana) if ana and all(a is not None for a in ana) else float("nan")
    return {
        "B": B, "U": cfg.U, "snr_db": p.snr_db, "quantizer": p.quantizer,
        "dither_mode": p.dither_mode, "d0": p.d0, "evm_empirical_pct": evm_emp,
        "evm_analytical_pct": evm_ana, "ci_halfwidth_pct": ci,
        "n_channels": n_channels, "n_symbols": n_symbols, "seed": cfg.master_seed,
    }


def evaluate_points(
    cfg: ExperimentConfig,
    B: int,
    points: list[OperatingPoint],
    threads: int = 1,
    *,
    empirical: bool = True,
    analytical: bool = True,
    n_channels: int | None = None,
    n_symbols: int | None = None,
    **kw,
) -> tuple[list[dict], list[ChannelOutcome]]:
    n_channels = n_channels or cfg.n_channels
    n_symbols = n_symbols or cfg.n_symbols
    outcomes = parallel_map(
        lambda c: simulate_channel(cfg, B, c, points, empirical=empirical, analytical=analytical,
                                   n_symbols=n_symbols, **kw),
        range(n_channels), threads,
    )
    rows = []
    for i, p in enumerate(points):
        emp = [o.empirical[i] for o in outcomes] if empirical else None
        ana = [o.analytical[i] for o in outcomes]
        rows.append(_row(cfg, B, p, emp, ana, n_channels, n_symbols if empirical else 0))
    return rows, outcomes


def _resolve_d0(cfg, B, snr, quantizer, mode, threads, cache) -> float:
    if mode == "none":
        return 0.0
    if cfg.d0 != "optimize":
        return float(cfg.d0)
    key = (B, snr, quantizer, mode)
    if key not in cache:
        cache[key] = optimize_dither(cfg.replace(B=B, quantizer=quantizer), snr, mode, threads).d0
    return cache[key]


def run_monte_carlo(cfg: ExperimentConfig, threads: int = 1, keep_constellation: bool = True) -> RunReport:
    """Single operating point: pooled empirical EVM, analytical EVM and constellation."""
    t0 = time.perf_counter()
    snr = cfg.snr_scalar
    d0 = _resolve_d0(cfg, cfg.B, snr, cfg.quantizer, cfg.dither_mode, threads, {})
    point = OperatingPoint(snr, cfg.quantizer, cfg.dither_mode, d0)
    rows, outcomes = evaluate_points(cfg, cfg.B, [point], threads, keep_estimates=keep_constellation)
    report = RunReport(cfg, rows)
    if keep_constellation:
        from ..rxchain import export_constellation

        report.constellations[_mode_key(cfg.B, point)] = export_constellation([o.estimates[0] for o in outcomes])
    report.wall_time_s = time.perf_counter() - t0
    return report


def _mode_key(B, p) -> str:
    return f"B{B}_{p.quantizer}_{p.dither_mode}_snr{p.snr_db:g}"


def run_sweep(cfg: ExperimentConfig, threads: int = 1, empirical: bool = True, analytical: bool = True) -> RunReport:
    """One row per (B, SNR, mode), plus supported-SNR intervals per threshold line."""
    t0 = time.perf_counter()
    report = RunReport(cfg)
    cache: dict = {}
    for B in cfg.antenna_counts:
        points = []
        for snr in cfg.snr_grid:
            for q, mode in cfg.modes:
                points.append(OperatingPoint(snr, q, mode, _resolve_d0(cfg, B, snr, q, mode, threads, cache)))
        rows, _ = evaluate_points(cfg, B, points, threads, empirical=empirical, analytical=analytical)
        report.rows.extend(rows)
    report.rows.sort(key=lambda r: (cfg.antenna_counts.index(r["B"]), cfg.snr_grid.index(r["snr_db"]),
                                    cfg.modes.index((r["quantizer"], r["dither_mode"]))))
    report.crossings = threshold_crossings(report.rows, cfg)
    report.dither = [
        {"B": k[0], "snr_db": k[1], "quantizer": k[2], "dither_mode": k[3], "d0": v} for k, v in cache.items()
    ]
    report.wall_time_s = time.perf_counter() - t0
    return report


def supported_intervals(snrs, evms, threshold: float) -> list[tuple[float, float]]:
    """SNR intervals where the EVM curve is at or below ``threshold``.

    Crossings are located by linear interpolation between grid points;
    intervals touching the grid edges end at the edge.
    """
    snrs = np.asarray(snrs, dtype=float)
    evms = np.asarray(evms, dtype=float)
    order = np.argsort(snrs)
    snrs, evms = snrs[order], evms[order]
    ok = evms <= threshold
    intervals = []
    start = None
    for i in range(len(snrs)):
        if ok[i] and start is None:
            if i == 0:
                start = snrs[0]
            else:
                start = _cross(snrs[i - 1], evms[i - 1], snrs[i], evms[i], threshold)
        if not ok[i] and start is not None:
            intervals.append((float(start), float(_cross(snrs[i - 1], evms[i - 1], snrs[i], evms[i], threshold))))
            start = None
    if start is not None:
        intervals.append((float(start), float(snrs[-1])))
    return intervals


def _cross(x0, y0, x1, y1, t):
    if y1 == y0:
        return x0
    return x0 + (t - y0) * (x1 - x0) / (y1 - y0)


def threshold_crossings(rows: list[dict], cfg: ExperimentConfig) -> list[dict]:
    out = []
    for label, thr in sorted(cfg.evm_threshold_lines.items()):
        for B in cfg.antenna_counts:
            for q, mode in cfg.modes:
                sel = [r for r in rows if r["B"] == B and r["quantizer"] == q and r["dither_mode"] == mode]
                for source in ("analytical", "empirical"):
                    col = f"evm_{source}_pct"
                    vals = [r[col] for r in sel]
                    if not vals or any(math.isnan(v) for v in vals):
                        continue
                    iv = supported_intervals([r["snr_db"] for r in sel], vals, thr)
                    out.append({"label": label, "threshold_pct": thr, "B": B, "quantizer": q,
                                "dither_mode": mode, "source": source,
                                "intervals": [list(i) for i in iv]})
    return out


@dataclass(frozen=True)
class DitherOptimum:
    d0: float
    evm_pct: float
    method: str
    evaluations: tuple[tuple[float, float], ...]


class _NotUnimodal(Exception):
    pass


def golden_section(f, lo: float, hi: float, tol: float, rel_tol: float = 0.0) -> tuple[float, float, list]:
    """Minimize ``f`` on ``[lo, hi]``; raises ``_NotUnimodal`` when an interior
    value exceeds both bracket ends.

    Stops once the bracket is narrower than ``tol`` or every bracket value
    lies within ``rel_tol`` (relative) of the best interior value. Equal
    interior values alone do not stop the search: they straddle the minimum.
    """
    inv = (math.sqrt(5) - 1) / 2
    history = []

    def ev(x):
        v = f(x)
        history.append((x, v))
        return v

    a, b = lo, hi
    fa, fb = ev(a), ev(b)
    c, d = b - inv * (b - a), a + inv * (b - a)
    fc, fd = ev(c), ev(d)
    while b - a > tol:
        if max(fc, fd) > max(fa, fb):
            raise _NotUnimodal
        if max(fa, fb) - min(fc, fd) <= rel_tol * min(fc, fd):
            break
        if fc <= fd:
            b, fb, d, fd = d, fd, c, fc
            c = b - inv * (b - a)
            fc = ev(c)
        else:
            a, fa, c, fc = c, fc, d, fd
            d = a + inv * (b - a)
            fd = ev(d)
    x, v = min(((a, fa), (c, fc), (d, fd), (b, fb)), key=lambda t: t[1])
    return x, v, history


def optimize_dither(cfg: ExperimentConfig, snr_db: float, mode: str, threads: int = 1) -> DitherOptimum:
    """Dither power minimizing EVM at ``snr_db``.

    Gaussian: golden-section search of the analytical EVM (pooled over
    ``cfg.n_channels`` channels) over ``log10(D0/E_s)`` in [-4, 4]; the
    undithered value wins ties. Binary: grid search over 25 log-spaced
    powers with a reduced 5 x 5 Monte Carlo run.
    """
    lo, hi = D0_LOG10_RANGE
    N0 = cfg.noise_power(snr_db)
    if mode == "gaussian":
        models = parallel_map(
            lambda c: SecondOrderModel(channel_for(cfg, cfg.B, c).responses(cfg.occupied_set, cfg.N),
                                       cfg.occupied_set, cfg.N, cfg.f_c, cfg.f_s, cfg.E_s),
            range(cfg.n_channels), threads,
        )

        def evm(d0):
            return pooled_evm(parallel_map(lambda m: m.error(N0, d0, cfg.quantizer), models, threads))

        def f(logd):
            return evm(cfg.E_s * 10**logd)

        try:
            x, v, hist = golden_section(f, lo, hi, GOLDEN_TOL_DECADES, GOLDEN_REL_TOL)
            method = "golden_section"
        except _NotUnimodal:
            warnings.warn(f"analytical EVM not unimodal in D0 at SNR {snr_db} dB; using grid search")
            grid = np.linspace(lo, hi, BINARY_GRID_SIZE)
            hist = [(g, f(g)) for g in grid]
            x, v = min(hist, key=lambda t: t[1])
            method = "grid"
        d0, best = cfg.E_s * 10**x, v
        undithered = evm(0.0)
        if undithered <= best:
            d0, best = 0.0, undithered
        evals = tuple((cfg.E_s * 10**h[0], h[1]) for h in hist)
        return DitherOptimum(d0, best, method, evals)
    if mode == "uniform_binary":
        grid = cfg.E_s * np.logspace(lo, hi, BINARY_GRID_SIZE)
        points = [OperatingPoint(snr_db, cfg.quantizer, mode, float(d)) for d in grid]
        rows, _ = evaluate_points(cfg, cfg.B, points, threads, analytical=False,
                                  n_channels=REDUCED_TRIALS, n_symbols=REDUCED_TRIALS)
        evms = [r["evm_empirical_pct"] for r in rows]
        i = int(np.argmin(evms))
        return DitherOptimum(float(grid[i]), evms[i], "grid_monte_carlo", tuple(zip(grid.tolist(), evms)))
    raise UnsupportedModeError(f"cannot optimize dither mode {mode!r}")


def run_dither_optimization(cfg: ExperimentConfig, threads: int = 1, modes=("gaussian", "uniform_binary"),
                            validate: bool = True) -> RunReport:
    """Optimize D0 per SNR and mode, then re-run the full trial count at the optimum."""
    t0 = time.perf_counter()
    report = RunReport(cfg)
    B = cfg.B
    for snr in cfg.snr_grid:
        points = [OperatingPoint(snr, cfg.quantizer, "none", 0.0)]
        for mode in modes:
            opt = optimize_dither(cfg, snr, mode, threads)
            report.dither.append({"B": B, "snr_db": snr, "quantizer": cfg.quantizer, "dither_mode": mode,
                                  "d0": opt.d0, "method": opt.method, "evm_at_optimum_pct": opt.evm_pct})
            points.append(OperatingPoint(snr, cfg.quantizer, mode, opt.d0))
        rows, _ = evaluate_points(cfg, B, points, threads, empirical=validate)
        report.rows.extend(rows)
    report.wall_time_s = time.perf_counter() - t0
    return report


@dataclass
class PsdResult:
    snr_db: float
    empirical: PsdEstimate
    analytical: PsdEstimate | None
    inband_empirical: float
    inband_analytical: float | None
    distortion_ratio_empirical: float
    distortion_ratio_analytical: float | None


def inband_distortion_ratio(model: SecondOrderModel, noise_power: float) -> float:
    """Distortion power over Bussgang-scaled signal power on the occupied subcarriers."""
    g = model.gain(noise_power)
    Ce = model.distortion(noise_power).cov
    signal = model.Es * np.einsum("b,kbb->", g * g, model.gram).real
    return float(np.einsum("kbb->", Ce).real / signal)


def run_psd(cfg: ExperimentConfig, threads: int = 1, n_channels: int | None = None,
            n_symbols: int | None = None) -> RunReport:
    """Empirical (Welch) and analytical PSD of the quantizer output for each SNR."""
    t0 = time.perf_counter()
    report = RunReport(cfg)
    n_channels = n_channels or cfg.n_channels
    n_symbols = n_symbols or cfg.n_symbols
    seg = cfg.psd_segment_len
    for snr in cfg.snr_grid:
        d0 = _resolve_d0(cfg, cfg.B, snr, cfg.quantizer, cfg.dither_mode, threads, {})
        p = OperatingPoint(snr, cfg.quantizer, cfg.dither_mode, d0)
        rows, outcomes = evaluate_points(cfg, cfg.B, [p], threads, analytical=False, n_channels=n_channels,
                                         n_symbols=n_symbols, psd_segment_len=seg, track_distortion=True)
        freqs = np.fft.rfftfreq(seg, 1 / cfg.f_s)
        emp = PsdEstimate(freqs, sum(o.psd_sum[0] for o in outcomes) / (n_channels * n_symbols))
        dist_emp = (sum(o.distortion_energy[0] for o in outcomes) / sum(o.signal_energy[0] for o in outcomes))
        ana = None
        dist_ana = None
        if cfg.quantizer == "one_bit" and cfg.dither_mode != "uniform_binary":
            N0 = cfg.noise_power(snr)

            def per_channel(c):
                ch = channel_for(cfg, cfg.B, c)
                model = SecondOrderModel.from_channel(ch, cfg.occupied_set, cfg.N, cfg.f_c, cfg.f_s, cfg.E_s)
                return model.output_autocov_diagonal(N0 + d0).mean(axis=1), inband_distortion_ratio(model, N0 + d0)

            res = parallel_map(per_channel, range(n_channels), threads)
            ana = analytical_psd(sum(r[0] for r in res) / n_channels, cfg.f_s, segment_len=seg)
            dist_ana = float(np.mean([r[1] for r in res]))
        lo, hi = cfg.f_c - cfg.bandwidth_hz / 2, cfg.f_c + cfg.bandwidth_hz / 2
        result = PsdResult(snr, emp, ana, float(emp.band_mean(lo, hi)),
                           None if ana is None else float(ana.band_mean(lo, hi)), dist_emp, dist_ana)
        report.psd.append(_psd_record(result))
        report.rows.extend(rows)
    report.wall_time_s = time.perf_counter() - t0
    return report


def _psd_record(r: PsdResult) -> dict:
    return {
        "snr_db": r.snr_db,
        "result": r,
        "inband_db_empirical": 10 * math.log10(r.inband_empirical),
        "inband_db_analytical": None if r.inband_analytical is None else 10 * math.log10(r.inband_analytical),
        "peak_hz_empirical": float(r.empirical.freqs[np.argmax(r.empirical.density)]),
        "peak_hz_analytical": None if r.analytical is None else float(r.analytical.freqs[np.argmax(r.analytical.density)]),
        "distortion_to_signal_db_empirical": 10 * math.log10(r.distortion_ratio_empirical),
        "distortion_to_signal_db_analytical": None if r.distortion_ratio_analytical is None
        else 10 * math.log10(r.distortion_ratio_analytical),
    }


__all__ = [
    "PURPOSE_TAGS", "SWEEP_COLUMNS", "OperatingPoint", "RunReport", "DitherOptimum", "PsdResult",
    "substream", "channel_for", "simulate_channel", "evaluate_points", "run_monte_carlo", "run_sweep",
    "optimize_dither", "run_dither_optimization", "run_psd", "supported_intervals", "golden_section",
    "inband_distortion_ratio", "parallel_map",
]
