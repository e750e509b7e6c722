"""Figures for the CLI reports. Always renders off-screen to files."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_pendulum(table: np.ndarray, path, pred: np.ndarray | None = None):
    """``table`` rows are ``t, x1, y1, x2, y2``."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    ax = axes[0]
    ax.plot(table[:, 1], table[:, 2], lw=0.8, label="mass 1")
    ax.plot(table[:, 3], table[:, 4], lw=0.8, label="mass 2")
    if pred is not None:
        ax.plot(pred[:, 1], pred[:, 2], "--", lw=0.8, label="mass 1 (model)")
        ax.plot(pred[:, 3], pred[:, 4], "--", lw=0.8, label="mass 2 (model)")
    ax.plot([0], [0], "ko", ms=4)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.legend(fontsize=7)
    ax = axes[1]
    for col, name in ((1, "x1"), (2, "y1"), (3, "x2"), (4, "y2")):
        line, = ax.plot(table[:, 0], table[:, col], lw=0.8, label=name)
        if pred is not None:
            ax.plot(pred[:, 0], pred[:, col], "--", lw=0.8, color=line.get_color())
    ax.set_xlabel("t")
    ax.legend(fontsize=7, ncol=2)
    return _save(fig, path)


def plot_energy(t, E, path, S=None, label="energy"):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(t, E, label=label)
    if S is not None:
        ax2 = ax.twinx()
        ax2.plot(t, S, color="tab:red", label="entropy")
        ax2.set_ylabel("S")
    ax.set_xlabel("t")
    ax.set_ylabel("E")
    return _save(fig, path)


def plot_loss(history, path):
    if not history:
        return None
    ep, loss = np.asarray(history).T
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogy(ep, loss)
    ax.set_xlabel("epoch")
    ax.set_ylabel("total MAE")
    return _save(fig, path)


def plot_depth(studies: list[dict], path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for st in studies:
        steps = [r["n_steps"] for r in st["rows"]]
        acc = [r["test_accuracy"] for r in st["rows"]]
        ax.plot(steps, acc, "o-", label=st["model"])
    ax.set_xscale("log", base=2)
    ax.set_xlabel("integration steps at fixed T")
    ax.set_ylabel("test accuracy")
    ax.legend(fontsize=7)
    return _save(fig, path)
