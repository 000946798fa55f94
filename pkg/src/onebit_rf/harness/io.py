"""CSV / JSON result files, written atomically."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import jsonschema
import numpy as np

from ..errors import InvalidArgumentError
from .experiments import SWEEP_COLUMNS, RunReport

CONSTELLATION_COLUMNS = ("trial", "symbol", "subcarrier", "user", "re", "im")
PSD_COLUMNS = ("freq_hz", "psd_db_empirical", "psd_db_analytical")
DITHER_COLUMNS = ("B", "snr_db", "quantizer", "dither_mode", "d0", "method", "evm_at_optimum_pct")

_number = {"type": ["number", "null"]}
REPORT_SCHEMA = {
    "type": "object",
    "required": ["config", "derived", "rows", "crossings", "dither", "psd", "artifacts"],
    "properties": {
        "config": {"type": "object", "required": ["B", "U", "N", "occupied_set", "master_seed"]},
        "derived": {
            "type": "object",
            "required": ["S", "bandwidth_hz", "osr", "delay_spread_s"],
            "properties": {k: {"type": "number"} for k in ("S", "bandwidth_hz", "osr", "delay_spread_s")},
        },
        "rows": {
            "type": "array",
            "items": {
                "type": "object",
                "required": list(SWEEP_COLUMNS),
                "additionalProperties": False,
                "properties": {
                    "B": {"type": "integer", "minimum": 1},
                    "U": {"type": "integer", "minimum": 1},
                    "snr_db": {"type": "number"},
                    "quantizer": {"enum": ["one_bit", "infinite"]},
                    "dither_mode": {"enum": ["none", "uniform_binary", "gaussian"]},
                    "d0": {"type": "number", "minimum": 0},
                    "evm_empirical_pct": _number,
                    "evm_analytical_pct": _number,
                    "ci_halfwidth_pct": _number,
                    "n_channels": {"type": "integer", "minimum": 1},
                    "n_symbols": {"type": "integer", "minimum": 0},
                    "seed": {"type": "integer", "minimum": 0},
                },
            },
        },
        "crossings": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["label", "threshold_pct", "B", "source", "intervals"],
                "properties": {
                    "intervals": {"type": "array", "items": {"type": "array", "minItems": 2, "maxItems": 2}},
                },
            },
        },
        "dither": {"type": "array", "items": {"type": "object", "required": ["snr_db", "dither_mode", "d0"]}},
        "psd": {"type": "array", "items": {"type": "object", "required": ["snr_db"]}},
        "artifacts": {"type": "object", "additionalProperties": {"type": "string"}},
    },
}


def validate_report(obj: dict) -> None:
    """Raise ``jsonschema.ValidationError`` if ``obj`` is not a valid report."""
    jsonschema.validate(obj, REPORT_SCHEMA)


def atomic_write(path, data: bytes) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def _csv_bytes(columns, records) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in records:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue().encode()


def _clean(v):
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return None if math.isnan(v) or math.isinf(v) else v
    if isinstance(v, np.integer):
        return int(v)
    return v


def psd_table(record: dict):
    """Rows of (freq, empirical dB, analytical dB), both relative to a common peak.

    The reference is the analytical peak when available, otherwise the
    empirical one. The analytical curve is interpolated onto the empirical
    frequency grid when the grids differ.
    """
    res = record["result"]
    emp = res.empirical
    freqs = emp.freqs
    ana = None
    if res.analytical is not None:
        ana = res.analytical.density
        if len(res.analytical.freqs) != len(freqs) or not np.allclose(res.analytical.freqs, freqs):
            ana = np.interp(freqs, res.analytical.freqs, ana)
    ref = np.max(ana) if ana is not None else np.max(emp.density)
    tiny = np.finfo(float).tiny
    emp_db = 10 * np.log10(np.maximum(emp.density, tiny) / ref)
    ana_db = None if ana is None else 10 * np.log10(np.maximum(ana, tiny) / ref)
    for i, f in enumerate(freqs):
        yield float(f), float(emp_db[i]), float("nan") if ana_db is None else float(ana_db[i])


def report_dict(report: RunReport) -> dict:
    cfg = report.config
    psd = [{k: v for k, v in rec.items() if k != "result"} for rec in report.psd]
    return _clean({
        "config": cfg.to_dict(),
        "derived": cfg.derived(),
        "rows": report.rows,
        "crossings": report.crossings,
        "dither": report.dither,
        "psd": psd,
        "artifacts": dict(sorted(report.artifacts.items())),
    })


def emit_results(report: RunReport, out_dir, fmt: str = "csv", figures: bool = True) -> dict[str, Path]:
    """Write the report's tables (CSV), figures (PNG) and ``report.json`` to ``out_dir``.

    Returns the written paths keyed by artifact name. File names and
    contents depend only on the report, never on timing.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot create output directory: {exc.strerror}", str(out)) from exc
    files: dict[str, bytes] = {}
    if fmt == "csv":
        if report.rows:
            files["evm.csv"] = _csv_bytes(SWEEP_COLUMNS, ([r[c] for c in SWEEP_COLUMNS] for r in report.rows))
        for key, points in sorted(report.constellations.items()):
            files[f"constellation_{key}.csv"] = _csv_bytes(
                CONSTELLATION_COLUMNS, ((t, s, k, u, p.real, p.imag) for t, s, k, u, p in points)
            )
        for rec in report.psd:
            files[f"psd_snr{rec['snr_db']:g}.csv"] = _csv_bytes(PSD_COLUMNS, psd_table(rec))
        if report.dither:
            files["dither_opt.csv"] = _csv_bytes(
                DITHER_COLUMNS, ([d.get(c, "") for c in DITHER_COLUMNS] for d in report.dither)
            )
    elif fmt != "json":
        raise InvalidArgumentError(f"unknown output format {fmt!r}")

    written: dict[str, Path] = {}
    for name, data in files.items():
        _write(out / name, data)
        written[name] = out / name
        report.artifacts[Path(name).stem] = name
    if figures:
        from .plotting import render_figures

        for name, path in render_figures(report, out).items():
            written[name] = path
            report.artifacts[Path(name).stem] = name
    doc = report_dict(report)
    if fmt == "json":
        doc["constellations"] = {k: [[t, s, kk, u, p.real, p.imag] for t, s, kk, u, p in pts]
                                 for k, pts in sorted(report.constellations.items())}
        doc["psd_tables"] = [{"snr_db": rec["snr_db"], "columns": list(PSD_COLUMNS),
                              "data": _clean(list(psd_table(rec)))} for rec in report.psd]
    validate_report(doc)
    _write(out / "report.json", (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode())
    written["report.json"] = out / "report.json"
    return written


def _write(path: Path, data: bytes) -> None:
    try:
        atomic_write(path, data)
    except OSError as exc:
        raise OSError(exc.errno, exc.strerror or str(exc), str(path)) from exc
