"""Figures rendered next to the CSV tables."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiments import RunReport  # noqa: E402

# Agg output is byte-stable once the software tag is dropped
_PNG_META = {"Software": None}

_STYLE = {
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
    "lines.markersize": 4,
    "legend.fontsize": 8,
    "legend.frameon": False,
}

_MODE_STYLE = {
    ("one_bit", "none"): ("C0", "1-bit"),
    ("one_bit", "gaussian"): ("C1", "1-bit, Gaussian dither"),
    ("one_bit", "uniform_binary"): ("C2", "1-bit, binary dither"),
    ("infinite", "none"): ("k", "inf. res."),
}


def _save(fig, path: Path) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".png")
    os.close(fd)
    try:
        fig.savefig(tmp, dpi=150, metadata=_PNG_META)
        os.replace(tmp, path)
    finally:
        plt.close(fig)
        if os.path.exists(tmp):
            os.unlink(tmp)


def plot_constellation(points, path, title: str = "") -> None:
    z = np.array([p[4] for p in points])
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(3.4, 3.4))
        ax.scatter(z.real, z.imag, s=2, alpha=0.5, color="C0", linewidths=0)
        lim = 1.25 * max(np.max(np.abs(z.real)), np.max(np.abs(z.imag)), 1e-12)
        ax.set_xlim(-lim, lim)
        ax.set_ylim(-lim, lim)
        ax.set_aspect("equal")
        ax.set_xlabel("in-phase")
        ax.set_ylabel("quadrature")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        _save(fig, Path(path))


def plot_evm(rows, path, thresholds=None) -> None:
    """EVM vs SNR: analytical curves as lines, Monte Carlo as markers."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.6))
        groups = sorted({(r["B"], r["quantizer"], r["dither_mode"]) for r in rows})
        markers = "osd^v<>"
        Bs = sorted({g[0] for g in groups})
        for B, q, mode in groups:
            sel = sorted((r for r in rows if (r["B"], r["quantizer"], r["dither_mode"]) == (B, q, mode)),
                         key=lambda r: r["snr_db"])
            snr = [r["snr_db"] for r in sel]
            color, label = _MODE_STYLE.get((q, mode), ("C3", f"{q}/{mode}"))
            if len(Bs) > 1:
                color = f"C{Bs.index(B)}"
            label = f"B={B}, {label}"
            ana = np.array([r["evm_analytical_pct"] for r in sel], dtype=float)
            emp = np.array([r["evm_empirical_pct"] for r in sel], dtype=float)
            if not np.all(np.isnan(ana)):
                ax.semilogy(snr, ana, "-", color=color, label=label)
                label = None
            if not np.all(np.isnan(emp)):
                ax.semilogy(snr, emp, markers[Bs.index(B) % len(markers)], color=color,
                            fillstyle="none", label=label)
        for name, thr in sorted((thresholds or {}).items()):
            ax.axhline(thr, color="0.4", ls="--", lw=0.8)
            ax.annotate(name, (ax.get_xlim()[0], thr), fontsize=7, va="bottom", color="0.3")
        ax.set_xlabel("SNR [dB]")
        ax.set_ylabel("EVM [%]")
        ax.legend(loc="upper right")
        fig.tight_layout()
        _save(fig, Path(path))


def plot_psd(record, path, f_lo: float = 1e9, f_hi: float = 3e9) -> None:
    from .io import psd_table

    data = np.array(list(psd_table(record)))
    sel = (data[:, 0] >= f_lo) & (data[:, 0] <= f_hi)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.plot(data[sel, 0] / 1e9, data[sel, 1], color="C0", lw=0.8, label="simulated")
        if not np.all(np.isnan(data[:, 2])):
            ax.plot(data[sel, 0] / 1e9, data[sel, 2], color="C3", lw=1.0, label="analytical")
        ax.set_xlabel("frequency [GHz]")
        ax.set_ylabel("PSD [dB]")
        ax.set_title(f"SNR = {record['snr_db']:g} dB")
        ax.legend(loc="upper left")
        fig.tight_layout()
        _save(fig, Path(path))


def render_figures(report: RunReport, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    written = {}
    for key, points in sorted(report.constellations.items()):
        name = f"constellation_{key}.png"
        plot_constellation(points, out / name)
        written[name] = out / name
    if len({r["snr_db"] for r in report.rows}) > 1:
        plot_evm(report.rows, out / "evm.png", report.config.evm_threshold_lines)
        written["evm.png"] = out / "evm.png"
    for rec in report.psd:
        name = f"psd_snr{rec['snr_db']:g}.png"
        plot_psd(rec, out / name)
        written[name] = out / name
    return written
