"""Figure rendering for report paths.

Every CLI command that emits a delimited report also renders the matching
figure next to it: training curves, the learning-rate trace, per-joint
error bars, the potential/effect density with its regression line, and the
reconstruction-error comparison.  Rendering is headless (Agg) and returns
the written path.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def save_training_curves(history: list, path) -> Path:
    path = Path(path)
    fig, ax1 = plt.subplots(figsize=(7, 4.2))
    epochs = [row["epoch"] for row in history]
    ax1.plot(epochs, [row["train_loss"] for row in history],
             color="tab:blue", marker="o", markersize=3, label="train loss")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("train loss", color="tab:blue")
    if history and "eval_mpjpe" in history[0]:
        ax2 = ax1.twinx()
        ax2.plot(epochs, [row["eval_mpjpe"] for row in history],
                 color="tab:red", marker="s", markersize=3, label="eval MPJPE")
        ax2.set_ylabel("eval MPJPE (cm)", color="tab:red")
    ax1.set_title("training progress")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_lr_trace(lr_trace: list, path) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.plot(np.arange(len(lr_trace)), lr_trace, lw=1.2)
    ax.set_xlabel("optimizer step")
    ax.set_ylabel("learning rate")
    ax.set_title("warmup + cosine schedule")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_per_joint_errors(mean_errors, joint_ids, path, names=None) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(max(6, 0.45 * len(joint_ids)), 3.8))
    x = np.arange(len(joint_ids))
    ax.bar(x, mean_errors, color="tab:purple")
    if names:
        labels = [names[j] if j < len(names) else str(j) for j in joint_ids]
    else:
        labels = [str(j) for j in joint_ids]
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=60, ha="right", fontsize=8)
    ax.set_ylabel("mean error (cm)")
    ax.set_title("per-joint position error")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_pp_pe(pp, pe, slope, intercept, p_value, path) -> Path:
    """Density of per-joint-instance propagation potential vs effect with
    the least-squares line."""
    path = Path(path)
    x, y = np.ravel(pp), np.ravel(pe)
    fig, ax = plt.subplots(figsize=(5.4, 4.6))
    hb = ax.hexbin(x, y, gridsize=40, cmap="viridis", mincnt=1, bins="log")
    fig.colorbar(hb, ax=ax, label="instances")
    xs = np.linspace(x.min(), x.max(), 50)
    ax.plot(xs, slope * xs + intercept, color="black", lw=1.8,
            label=f"fit: slope={slope:.3f}, p={p_value:.2e}")
    ax.set_xlabel("propagation potential (cm)")
    ax.set_ylabel("propagation effect (cm)")
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_recon_mse(rows: list, path) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5, 3.6))
    names = [row["variant"] for row in rows]
    values = [row["per_pixel_mse"] for row in rows]
    ax.bar(np.arange(len(rows)), values,
           color=["tab:green", "tab:orange", "tab:gray"][:len(rows)])
    ax.set_xticks(np.arange(len(rows)))
    ax.set_xticklabels(names)
    ax.set_ylabel("per-pixel reconstruction MSE")
    ax.set_title("heatmap recovery by encoder")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
