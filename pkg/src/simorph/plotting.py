"""Figure rendering for the CSV outputs (PNG files next to the data)."""

from __future__ import annotations

import csv
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_MODE_STYLE = {"sfim": "C0", "dsim": "C1", "hsim": "C2", "rsim": "C3"}


def _read_csv(path):
    with open(path, encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    header, data = rows[0], rows[1:]
    return header, data


def plot_sweep(csv_path: str, png_path: str) -> str:
    header, data = _read_csv(csv_path)
    col = {name: j for j, name in enumerate(header)}
    series = defaultdict(dict)
    for row in data:
        if row[col["realization"]] != "mean":
            continue
        key = (row[col["mode"]], row[col["phase_mode"]])
        series[key][float(row[col["value"]])] = float(row[col["sum_rate"]])

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for (mode, phase_mode), pts in sorted(series.items()):
        xs = sorted(pts)
        style = "-" if phase_mode == "continuous" else "--"
        ax.plot(xs, [pts[x] for x in xs], style, marker="o",
                color=_MODE_STYLE.get(mode, None),
                label=f"{mode.upper()} ({phase_mode})")
    sweep_var = data[0][col["sweep_var"]] if data else "value"
    ax.set_xlabel(sweep_var)
    ax.set_ylabel("mean sum rate (bits/s/Hz)")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return png_path


def plot_convergence(csv_path: str, png_path: str) -> str:
    header, data = _read_csv(csv_path)
    col = {name: j for j, name in enumerate(header)}
    series = defaultdict(list)
    for row in data:
        key = (row[col["mode"]], row[col["phase_mode"]])
        series[key].append((int(row[col["iteration"]]),
                            float(row[col["sum_rate"]])))

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for (mode, phase_mode), pts in sorted(series.items()):
        pts.sort()
        style = "-" if phase_mode == "continuous" else "--"
        ax.plot([p[0] for p in pts], [p[1] for p in pts], style,
                color=_MODE_STYLE.get(mode, None),
                label=f"{mode.upper()} ({phase_mode})")
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("sum rate (bits/s/Hz)")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return png_path


def plot_perturbation(csv_path: str, png_path: str) -> str:
    header, data = _read_csv(csv_path)
    col = {name: j for j, name in enumerate(header)}
    by_range = defaultdict(lambda: defaultdict(list))
    for row in data:
        y = float(row[col["y_tilde"]])
        for name in ("predicted_gain", "actual_gain", "g_dsim"):
            by_range[y][name].append(float(row[col[name]]))

    xs = sorted(by_range)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for name, label, style in (("predicted_gain", "predicted (full morphing)", "o-"),
                               ("actual_gain", "measured (full morphing)", "s--"),
                               ("g_dsim", "predicted (layer translation)", "^-")):
        ys = [sum(by_range[x][name]) / len(by_range[x][name]) for x in xs]
        ax.plot(xs, ys, style, label=label)
    ax.set_xlabel("morphing range (m)")
    ax.set_ylabel("received-power gain (W)")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return png_path
