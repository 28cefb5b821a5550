"""Figures rendered next to the delimited outputs of each CLI command."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .dataset import EMOTIONS


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_label_distribution(histogram, path) -> None:
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.bar(EMOTIONS, histogram, color="tab:blue")
    ax.set_ylabel("utterances")
    ax.set_title("Label distribution")
    ax.tick_params(axis="x", rotation=30)
    _save(fig, path)


def save_training_curves(log: list[dict], path) -> None:
    epochs = [e["epoch"] for e in log]
    losses = [e["train_loss"] for e in log]
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.plot(epochs, losses, marker="o", color="tab:red", label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("train loss", color="tab:red")
    f1_points = [(e["epoch"], e["dev_f1_macro"]) for e in log if "dev_f1_macro" in e]
    if f1_points:
        ax2 = ax.twinx()
        ax2.plot(*zip(*f1_points), marker="s", color="tab:blue", label="dev F1-macro")
        ax2.set_ylabel("dev F1-macro", color="tab:blue")
        ax2.set_ylim(0, 1.05)
    ax.set_title("Training")
    _save(fig, path)


def save_f1_bars(per_class: dict, macro: float, path) -> None:
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.bar(list(per_class), [per_class[k] for k in per_class], color="tab:green")
    ax.axhline(macro, color="black", linestyle="--", linewidth=1,
               label=f"macro = {macro:.3f}")
    ax.set_ylabel("F1")
    ax.set_ylim(0, 1.05)
    ax.set_title("Per-class F1")
    ax.tick_params(axis="x", rotation=30)
    ax.legend()
    _save(fig, path)


def save_fusion_comparison(report: dict, path) -> None:
    before = [report["f1_per_class_before"][name] for name in EMOTIONS]
    after = [report["f1_per_class_after"][name] for name in EMOTIONS]
    x = np.arange(len(EMOTIONS))
    fig, ax = plt.subplots(figsize=(8, 3.5))
    ax.bar(x - 0.2, before, width=0.4, label=f"uniform ({report['f1_macro_before']:.3f})")
    ax.bar(x + 0.2, after, width=0.4, label=f"fitted ({report['f1_macro_after']:.3f})")
    ax.set_xticks(x, EMOTIONS, rotation=30)
    ax.set_ylabel("F1")
    ax.set_ylim(0, 1.05)
    ax.set_title("Fusion: per-class F1 before/after fitting")
    ax.legend()
    _save(fig, path)
