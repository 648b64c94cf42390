"""Matplotlib renderings of masks and loss traces (written to files, never shown)."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import ListedColormap  # noqa: E402

from .cha_mask import ChaMask  # noqa: E402

COMPOSE_COLOR = "#f28e2b"
EXPAND_COLOR = "#4e79a7"


def plot_mask(mask: ChaMask, path, tokens: Optional[Sequence[str]] = None, title: str = "") -> Path:
    """Heatmap with rows as queries: orange cells compose, blue cells expand, white is masked."""
    codes = np.zeros(mask.visible.shape, dtype=int)
    codes[mask.visible & mask.compose[:, None]] = 1
    codes[mask.visible & ~mask.compose[:, None]] = 2
    n = mask.n
    size = max(2.5, 0.35 * n + 1)
    fig, ax = plt.subplots(figsize=(size, size))
    ax.imshow(codes, cmap=ListedColormap(["white", COMPOSE_COLOR, EXPAND_COLOR]), vmin=0, vmax=2)
    labels = list(tokens) if tokens is not None else [str(i) for i in range(n)]
    ax.set_xticks(range(n), labels, rotation=90, fontsize=8)
    ax.set_yticks(range(n), labels, fontsize=8)
    ax.set_xticks(np.arange(-0.5, n), minor=True)
    ax.set_yticks(np.arange(-0.5, n), minor=True)
    ax.grid(which="minor", color="#cccccc", linewidth=0.5)
    ax.tick_params(which="minor", length=0)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_losses(trace, path, title: str = "training loss") -> Path:
    """Log-scale seq2seq, pointer and total loss curves from a list of TraceRow."""
    steps = [r.step for r in trace]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for name in ("total", "seq2seq", "pointer"):
        ax.plot(steps, [max(getattr(r, name), 1e-12) for r in trace], label=name, linewidth=1)
    ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
