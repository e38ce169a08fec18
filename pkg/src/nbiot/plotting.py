"""Figures rendered next to the CSV outputs (Agg backend, no display needed)."""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

Y_LABELS = {
    "mean_correct": "detection rate",
    "mean_block_error": "BLER",
    "mean_detected": "detection rate",
    "mean_resolved": "resolved fraction",
    "mean_accepted": "accepted per sequence",
}


def _headline(summary: list[dict]) -> str:
    for key in Y_LABELS:
        if summary and key in summary[0]:
            return key
    return [k for k in summary[0] if k.startswith("mean_")][0]


def plot_summary(summary: list[dict], path, title: str = "") -> Path:
    """Headline metric against SNR, one curve per repetition count when present."""
    path = Path(path)
    key = _headline(summary)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    series = {}
    for row in summary:
        series.setdefault(row.get("repetitions"), []).append((row["snr_db"], row[key]))
    for reps, pts in sorted(series.items(), key=lambda kv: (kv[0] is None, kv[0])):
        pts.sort()
        x = [p[0] for p in pts]
        y = [p[1] for p in pts]
        label = None if reps is None else f"R={reps}"
        ax.plot(x, y, marker="o", label=label)
    if key == "mean_block_error":
        ax.set_yscale("log")
        ax.set_ylim(bottom=1e-3)
    ax.set_xlabel("SNR [dB]" if not all(math.isinf(r["snr_db"]) for r in summary) else "")
    ax.set_ylabel(Y_LABELS.get(key, key))
    if any(r is not None for r in series):
        ax.legend(frameon=False)
    ax.grid(alpha=0.3)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_grid(values, usage, path, title: str = "") -> Path:
    """Resource-element usage map of one subframe."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.imshow(usage, origin="lower", aspect="auto", cmap="tab10", interpolation="nearest")
    ax.set_xlabel("OFDM symbol")
    ax.set_ylabel("subcarrier")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
