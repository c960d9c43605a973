"""Figure rendering from the experiment CSVs.

The simulator only writes CSVs; every plot style lives here.  All readers
reject empty inputs before any file is created.
"""

from __future__ import annotations

import csv
import math
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "plot_compare",
    "plot_histograms",
    "plot_learning_curve",
    "plot_omega_fb",
    "plot_scatter",
]

_COLORS = {"none": "tab:orange", "open_loop": "tab:green", "neural": "tab:blue"}


def _read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if len(rows) < 2:
        raise ValueError(f"{path}: no data rows")
    header = rows[0]
    data = np.array([[float(v) if v != "nan" else math.nan for v in r] for r in rows[1:]])
    return header, data


def _strategy_of(path) -> str:
    name = os.path.basename(path)
    for key in _COLORS:
        if key in name:
            return key
    return name


def plot_compare(fisher_csvs: list[str], out_path: str) -> str:
    """Information-per-time overlay: effective (solid) and record (dashed)."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for path in fisher_csvs:
        header, data = _read_csv(path)
        t = data[:, header.index("t")]
        label = _strategy_of(path)
        color = _COLORS.get(label, None)
        ax.plot(t, data[:, header.index("qeff_over_t")], "-", color=color,
                label=f"effective, {label}")
        ax.plot(t, data[:, header.index("fhom_over_t")], "--", color=color,
                label=f"record, {label}")
    ax.set_xlabel(r"$\kappa t$")
    ax.set_ylabel("information / time")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_histograms(hist_csvs: list[str], out_path: str) -> str:
    """Perpendicular-squeezing densities, one panel per sample time."""
    panels = []
    for path in hist_csvs:
        refs = {}
        with open(path) as fh:
            for line in fh:
                if not line.startswith("#"):
                    break
                key, _, value = line[1:].partition("=")
                refs[key.strip()] = value.strip()
        header, data = _read_csv(path)
        panels.append((path, refs, header, data))
    fig, axes = plt.subplots(1, len(panels), figsize=(3.2 * len(panels), 3.2),
                             sharey=True, squeeze=False)
    for ax, (path, refs, header, data) in zip(axes[0], panels):
        centers = 0.5 * (data[:, 0] + data[:, 1])
        ax.bar(centers, data[:, header.index("density")],
               width=data[0, 1] - data[0, 0], color="tab:blue", alpha=0.7)
        for key, style in (("xi_ref_none_db", ":"), ("xi_ref_open_loop_db", "--")):
            if key in refs:
                ax.axvline(float(refs[key]), color="k", linestyle=style, lw=1)
        ax.set_title(f"t = {refs.get('t', '?')}"[:12], fontsize=9)
        ax.set_xlabel("perpendicular squeezing (dB)")
    axes[0][0].set_ylabel("probability density")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_learning_curve(curve_csv: str, out_path: str) -> str:
    header, data = _read_csv(curve_csv)
    mask = np.isfinite(data[:, header.index("mean_episode_return")])
    if not mask.any():
        raise ValueError(f"{curve_csv}: no finished episodes logged")
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.plot(data[mask, 0], data[mask, header.index("mean_episode_return")])
    ax.set_xlabel("environment steps")
    ax.set_ylabel("mean episode return")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_omega_fb(trace_csv: str, out_path: str) -> str:
    header, data = _read_csv(trace_csv)
    t = data[:, 0]
    mean, std = data[:, 1], data[:, 2]
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    for col in range(3, data.shape[1]):
        ax.plot(t, data[:, col], lw=0.6, alpha=0.6, color="tab:blue")
    ax.plot(t, mean, "k-", lw=1.5, label="ensemble mean")
    ax.plot(t, mean + std, "k--", lw=0.8)
    ax.plot(t, mean - std, "k--", lw=0.8)
    ax.set_xlabel(r"$\kappa t$")
    ax.set_ylabel("control frequency")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_scatter(scatter_csv: str, out_path: str) -> str:
    header, data = _read_csv(scatter_csv)
    xi = data[:, header.index("perp_squeezing_db")]
    absr = data[:, header.index("abs_r")]
    fhom = data[:, header.index("fhom_traj")]
    fig, axes = plt.subplots(1, 2, figsize=(8.0, 3.6))
    axes[0].scatter(xi, absr, s=6, alpha=0.5)
    axes[0].set_xlabel("perpendicular squeezing (dB)")
    axes[0].set_ylabel(r"$|r|$")
    positive = fhom > 0
    axes[1].scatter(absr[positive], np.log10(fhom[positive]), s=6, alpha=0.5)
    axes[1].set_xlabel(r"$|r|$")
    axes[1].set_ylabel(r"$\log_{10}$ record information")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
