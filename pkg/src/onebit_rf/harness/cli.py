"""Command-line entry point: ``onebit-rf <command> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..errors import InvalidArgumentError, NumericalError, UnsupportedModeError
from .config import ExperimentConfig

log = logging.getLogger("onebit_rf")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--config", type=Path, help="YAML/JSON file with ExperimentConfig fields")
    g.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    g.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    g.add_argument("--threads", type=int, default=1, help="worker threads")
    g.add_argument("--format", choices=("csv", "json"), default="csv")
    g.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    g.add_argument("-v", "--verbose", action="store_true")
    o = p.add_argument_group("config overrides")
    o.add_argument("--snr", type=float, nargs="+", metavar="DB", help="SNR value(s) in dB")
    o.add_argument("--B", type=int, nargs="+", dest="antennas", help="antenna count(s)")
    o.add_argument("--quantizer", choices=("one_bit", "infinite"))
    o.add_argument("--dither", choices=("none", "uniform_binary", "gaussian"))
    o.add_argument("--d0", help="dither power or 'optimize'")
    o.add_argument("--n-channels", type=int)
    o.add_argument("--n-symbols", type=int)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="onebit-rf",
        description="Massive MU-MIMO-OFDM uplink with direct RF-sampling 1-bit ADCs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()
    sub.add_parser("simulate", parents=[common], help="single operating point: EVM + constellation")
    sw = sub.add_parser("sweep", parents=[common], help="EVM table over SNR, antennas and modes")
    sw.add_argument("--analytical-only", action="store_true", help="skip the Monte Carlo engine")
    sub.add_parser("psd", parents=[common], help="empirical and analytical PSD of the quantizer output")
    dp = sub.add_parser("dither-opt", parents=[common], help="optimize the dither power per SNR")
    dp.add_argument("--modes", nargs="+", default=["gaussian", "uniform_binary"],
                    choices=("gaussian", "uniform_binary"))
    sub.add_parser("validate", parents=[common], help="run the oracle/invariant suite")
    return parser


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.snr:
        changes["snr_db"] = args.snr[0] if len(args.snr) == 1 else tuple(args.snr)
    if args.antennas:
        changes["B"] = args.antennas[0]
        if len(args.antennas) > 1:
            changes["B_sweep"] = tuple(args.antennas)
    if args.quantizer:
        changes["quantizer"] = args.quantizer
    if args.dither:
        changes["dither_mode"] = args.dither
        if args.dither == "none":
            changes["d0"] = 0.0
    if args.d0 is not None:
        changes["d0"] = args.d0 if args.d0 == "optimize" else float(args.d0)
    if args.n_channels:
        changes["n_channels"] = args.n_channels
    if args.n_symbols:
        changes["n_symbols"] = args.n_symbols
    return cfg.replace(**changes) if changes else cfg


def _summarize(report) -> None:
    d = report.config.derived()
    print(f"BW = {d['bandwidth_hz'] / 1e6:.2f} MHz, OSR = {d['osr']:.1f}, "
          f"delay spread = {d['delay_spread_s'] * 1e9:.0f} ns")
    for r in report.rows:
        print(f"B={r['B']:3d} SNR={r['snr_db']:6.1f} dB {r['quantizer']:8s} {r['dither_mode']:14s} "
              f"D0={r['d0']:.3g}  EVM sim={r['evm_empirical_pct']:.2f}%  ana={r['evm_analytical_pct']:.2f}%")
    for c in report.crossings:
        print(f"{c['label']} ({c['threshold_pct']}%), B={c['B']}, {c['source']}: {c['intervals']}")
    for p in report.psd:
        print(f"PSD SNR={p['snr_db']:g} dB: peak {p['peak_hz_empirical'] / 1e9:.3f} GHz, "
              f"in-band distortion/signal {p['distortion_to_signal_db_empirical']:.1f} dB (sim)")
    log.info("wall time %.1f s", report.wall_time_s)


def _validate(args) -> int:
    from .io import atomic_write
    from .validation import run_oracle_suite

    seed = args.seed if args.seed is not None else 0
    results = run_oracle_suite(seed)
    for r in results:
        print(r.line())
    args.out.mkdir(parents=True, exist_ok=True)
    lines = ["name,value,tolerance,passed"]
    lines += [f"\"{r.name}\",{r.value!r},{r.tolerance!r},{r.passed}" for r in results]
    atomic_write(args.out / "validation.csv", ("\n".join(lines) + "\n").encode())
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERICAL


def run(args) -> int:
    from . import experiments as ex
    from .io import emit_results

    if args.command == "validate":
        return _validate(args)
    cfg = load_config(args)
    threads = max(1, args.threads)
    if args.command == "simulate":
        report = ex.run_monte_carlo(cfg, threads)
    elif args.command == "sweep":
        report = ex.run_sweep(cfg, threads, empirical=not args.analytical_only)
    elif args.command == "psd":
        report = ex.run_psd(cfg, threads)
    else:
        report = ex.run_dither_optimization(cfg, threads, modes=tuple(args.modes))
    emit_results(report, args.out, args.format, figures=not args.no_figures)
    _summarize(report)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except (InvalidArgumentError, UnsupportedModeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
