"""Deterministic SVG plots of mission logs.

Figures render through the Agg backend with a fixed hash salt and no
embedded creation date, so rerunning a seeded scenario reproduces the
plot files byte for byte.
"""

from __future__ import annotations

from typing import Dict, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import RunLogs, RunMetrics
from .recognition import ConfusionResult
from .textures import TextureClass

plt.rcParams["svg.hashsalt"] = "aerotact"

_SAVE = {"format": "svg", "metadata": {"Date": None}}
_MODE_COLORS = {"ft-only": "tab:blue", "tactile-only": "tab:green", "fused": "tab:red"}


def _shade_contact(ax, t: np.ndarray, lam: np.ndarray) -> None:
    """Tint the spans where the force controller is active."""
    padded = np.concatenate([[0.0], lam, [0.0]])
    edges = np.flatnonzero(np.abs(np.diff((padded > 0.5).astype(int))))
    for a, b in zip(edges[::2], edges[1::2]):
        ax.axvspan(t[a], t[min(b, len(t)) - 1], color="tab:orange", alpha=0.15, lw=0)


def _position_error_mm(logs: RunLogs) -> np.ndarray:
    """Distance to the active position target: the frozen operating
    position while the force controller holds, the setpoint otherwise."""
    ctrl = logs.control
    p = ctrl[:, 1:4]
    lam = ctrl[:, 7:8]
    op = ctrl[:, 15:18]
    sp = ctrl[:, 18:21]
    target = np.where(lam > 0.5, op, sp)
    return 1000.0 * np.linalg.norm(p - target, axis=1)


def plot_force(logs: RunLogs, path: str) -> str:
    """Wall-normal force: truth and estimate against the reference."""
    t = logs.col("control", "t")
    fig, ax = plt.subplots(figsize=(8.0, 3.2), constrained_layout=True)
    _shade_contact(ax, t, logs.col("control", "lam"))
    ax.plot(t, logs.col("control", "f_true_z"), color="tab:blue", lw=1.0, label="true")
    ax.plot(t, logs.col("control", "f_est_z"), color="tab:red", lw=0.8, alpha=0.8, label="estimate")
    ax.plot(t, logs.col("control", "f_ref"), color="black", lw=0.8, ls="--", label="reference")
    ax.set_xlabel("t (s)")
    ax.set_ylabel("normal force (N)")
    ax.set_title(f"{logs.name}: force tracking ({logs.sensor_mode})")
    ax.legend(loc="upper right", fontsize=8)
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    return path


def plot_position_error(logs: RunLogs, path: str) -> str:
    """Distance to the active position target over the mission."""
    t = logs.col("control", "t")
    fig, ax = plt.subplots(figsize=(8.0, 3.2), constrained_layout=True)
    _shade_contact(ax, t, logs.col("control", "lam"))
    ax.plot(t, _position_error_mm(logs), color="tab:blue", lw=1.0)
    ax.set_xlabel("t (s)")
    ax.set_ylabel("position error (mm)")
    ax.set_title(f"{logs.name}: position tracking")
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    return path


def plot_confusion(conf: ConfusionResult, path: str) -> str:
    """Per-frame texture confusion heatmap, row-normalized coloring."""
    counts = conf.counts.astype(float)
    rows = counts.sum(axis=1, keepdims=True)
    rates = np.divide(counts, rows, out=np.zeros_like(counts), where=rows > 0)
    names = [c.name.lower().replace("_", " ") for c in TextureClass]
    fig, ax = plt.subplots(figsize=(6.0, 5.2), constrained_layout=True)
    im = ax.imshow(rates, cmap="Blues", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(len(names)), names, rotation=45, ha="right", fontsize=8)
    ax.set_yticks(range(len(names)), names, fontsize=8)
    ax.set_xlabel("predicted")
    ax.set_ylabel("truth")
    ax.set_title(f"texture confusion (average {conf.average:.1%})")
    for i in range(counts.shape[0]):
        for j in range(counts.shape[1]):
            if counts[i, j] > 0:
                color = "white" if rates[i, j] > 0.6 else "black"
                ax.text(j, i, str(int(counts[i, j])), ha="center", va="center", fontsize=7, color=color)
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    return path


def plot_mode_comparison(results: Dict[str, Tuple[RunLogs, RunMetrics]], path: str) -> str:
    """Force truth, estimate error, and position error per sensor mode."""
    fig, axes = plt.subplots(3, 1, figsize=(8.0, 7.5), sharex=True, constrained_layout=True)
    first = next(iter(results.values()))[0]
    t_ref = first.col("control", "t")
    _shade_contact(axes[0], t_ref, first.col("control", "lam"))
    axes[0].plot(t_ref, first.col("control", "f_ref"), color="black", lw=0.8, ls="--", label="reference")
    for mode, (logs, _) in results.items():
        color = _MODE_COLORS.get(mode)
        t = logs.col("control", "t")
        axes[0].plot(t, logs.col("control", "f_true_z"), color=color, lw=0.9, label=mode)
        est_err = np.linalg.norm(logs.control[:, 12:15] - logs.control[:, 8:11], axis=1)
        axes[1].plot(t, est_err, color=color, lw=0.9, label=mode)
        axes[2].plot(t, _position_error_mm(logs), color=color, lw=0.9, label=mode)
    axes[0].set_ylabel("normal force (N)")
    axes[0].legend(loc="upper right", fontsize=8)
    axes[1].set_ylabel("force estimate error (N)")
    axes[2].set_ylabel("position error (mm)")
    axes[2].set_xlabel("t (s)")
    axes[0].set_title("sensor mode comparison")
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    return path
