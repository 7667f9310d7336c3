"""Figure rendering for the CLI report paths.

Reads back the CSV files a command just wrote and saves matplotlib PNGs
next to them.  Kept separate from the numerics so data-only runs never
import matplotlib.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

# no timestamps in the rendered files; seeded runs stay byte-reproducible
PNG_METADATA = {"Software": "echomem"}
DPI = 120


def _load(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(x) for x in row] for row in reader])
    return header, data


def _save(fig, path: Path) -> None:
    fig.savefig(path, dpi=DPI, metadata=PNG_METADATA)
    plt.close(fig)


def plot_pulse_sweep(out: Path) -> Path:
    _, data = _load(out / "inversion_sweep.csv")
    fig, ax = plt.subplots(figsize=(5.2, 3.6), constrained_layout=True)
    for amp in np.unique(data[:, 1]):
        sel = data[:, 1] == amp
        ax.plot(data[sel, 0] / 1e3, data[sel, 2], label=f"amplitude x{amp:g}")
    ax.set_xlabel("detuning (kHz)")
    ax.set_ylabel("inversion probability")
    ax.axhline(0.99, color="0.6", lw=0.8, ls="--")
    ax.legend(fontsize=8)
    target = out / "inversion_sweep.png"
    _save(fig, target)
    return target


def plot_memory(out: Path) -> list[Path]:
    targets = []
    _, data = _load(out / "echo_field.csv")
    fig, ax = plt.subplots(figsize=(5.2, 3.6), constrained_layout=True)
    ax.plot(data[:, 0] * 1e6, data[:, 3], color="crimson")
    ax.set_xlabel("time (us)")
    ax.set_ylabel("|echo amplitude|^2 (arb.)")
    target = out / "echo_field.png"
    _save(fig, target)
    targets.append(target)
    if (out / "absorption_profile.csv").exists():
        targets.append(plot_absorption(out))
    if (out / "counts.csv").exists():
        _, counts = _load(out / "counts.csv")
        fig, ax = plt.subplots(figsize=(5.2, 3.6), constrained_layout=True)
        widths = counts[:, 1] - counts[:, 0]
        ax.bar(counts[:, 0] * 1e6, counts[:, 2], width=widths * 1e6, align="edge", color="steelblue")
        ax.set_xlabel("time (us)")
        ax.set_ylabel("counts")
        target = out / "counts.png"
        _save(fig, target)
        targets.append(target)
    return targets


def plot_absorption(out: Path) -> Path:
    _, data = _load(out / "absorption_profile.csv")
    fig, ax = plt.subplots(figsize=(5.2, 3.6), constrained_layout=True)
    ax.plot(data[:, 0] / 1e6, data[:, 1], color="darkslateblue")
    ax.set_xlabel("detuning from the signal line (MHz)")
    ax.set_ylabel("absorption (norm.)")
    target = out / "absorption_profile.png"
    _save(fig, target)
    return target


def plot_fit(out: Path, data_path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5.2, 3.6), constrained_layout=True)
    _, data = _load(data_path)
    if data.shape[1] >= 3 and (out / "fit_curve.csv").exists():
        ax.errorbar(data[:, 0], data[:, 1], yerr=data[:, 2], fmt="o", ms=3.5, lw=0.8, label="data")
        _, curve = _load(out / "fit_curve.csv")
        ax.plot(curve[:, 0], curve[:, 1], color="darkorange", label="fit")
        ax.set_xlabel("time (s)")
        ax.set_ylabel("value")
    else:
        ax.scatter(data[:, 0], data[:, 2] if data.shape[1] > 2 else data[:, 1], s=8)
        ax.set_xlabel("t31 (s)")
        ax.set_ylabel("value")
    ax.legend(fontsize=8)
    target = out / "fit.png"
    _save(fig, target)
    return target


def plot_bounds(out: Path) -> Path:
    _, data = _load(out / "bounds_curve.csv")
    fig, ax = plt.subplots(figsize=(5.2, 3.6), constrained_layout=True)
    ax.plot(data[:, 0], data[:, 1], ls="--", color="seagreen", label="classical bound")
    ax.plot(data[:, 0], data[:, 2], color="crimson", label="expected fidelity")
    ax.set_xlabel("mean photons per qubit")
    ax.set_ylabel("fidelity")
    ax.legend(fontsize=8)
    target = out / "bounds.png"
    _save(fig, target)
    return target
