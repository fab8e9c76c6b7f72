import io

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from common.files import atomic_write  # noqa: E402

FIGURE_DPI = 150


def _save(fig, path):
    buffer = io.BytesIO()
    fig.savefig(buffer, format="png", dpi=FIGURE_DPI, bbox_inches="tight")
    plt.close(fig)
    return atomic_write(path, buffer.getvalue())


def plot_accuracy_curves(epochs, curves: dict[str, np.ndarray], path, title="", watermark=""):
    """Accuracy against training epochs, one line per model."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label, accuracy in curves.items():
        ax.plot(epochs, accuracy, label=label, linewidth=1.5)
    ax.set_xlabel("Epoch")
    ax.set_ylabel("Accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.set_title(title)
    ax.legend()
    ax.grid(True, alpha=0.3)
    if watermark:
        fig.text(0.5, 0.5, watermark, ha="center", va="center", fontsize=20, color="grey", alpha=0.3, rotation=20)
    return _save(fig, path)


def plot_ablation_bars(subsets, accuracies: dict[str, dict[str, float]], path, title="", watermark=""):
    """Grouped bars: final accuracy per task subset for each model."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    positions = np.arange(len(subsets))
    width = 0.8 / max(len(accuracies), 1)
    for k, (label, by_subset) in enumerate(accuracies.items()):
        ax.bar(positions + k * width, [by_subset[s] for s in subsets], width, label=label)
    ax.set_xticks(positions + width * (len(accuracies) - 1) / 2)
    ax.set_xticklabels(subsets)
    ax.set_ylabel("Final accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.set_title(title)
    ax.legend()
    ax.grid(True, axis="y", alpha=0.3)
    if watermark:
        fig.text(0.5, 0.5, watermark, ha="center", va="center", fontsize=20, color="grey", alpha=0.3, rotation=20)
    return _save(fig, path)
