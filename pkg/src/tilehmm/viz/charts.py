from __future__ import annotations

from collections.abc import Mapping, Sequence
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..model import ProbeTrack  # noqa: E402
from ..regions import ProbabilityTrack  # noqa: E402

COLORS = ["#2E86AB", "#F18F01", "#3B8B5A", "#A23B72"]


def plot_probability_tracks(
    track: ProbeTrack,
    tracks_by_fit: Mapping[str, ProbabilityTrack],
    out_path: str | Path,
    truth: Sequence[tuple[str, int, int]] = (),
    window: tuple[int, int] | None = None,
) -> str:
    """Mean treatment signal above one P(E=1) panel per fit, true intervals shaded. Used by CLI."""
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    lo, hi = window or (0, track.n_probes)
    x = track.positions[lo:hi]
    signal = track.treatment[lo:hi].mean(axis=1)

    n_panels = 1 + len(tracks_by_fit)
    fig, axes = plt.subplots(n_panels, 1, figsize=(14, 2.5 * n_panels), sharex=True, squeeze=False)
    ax = axes[0, 0]
    ax.plot(x, signal, lw=0.5, color="#555555")
    ax.set_ylabel("mean treatment")
    ax.set_title(f"{track.chromosome_id}: probes {lo}..{hi - 1}", fontsize=12, fontweight="bold")
    for chrom, start, end in truth:
        if chrom == track.chromosome_id and end >= x[0] and start <= x[-1]:
            ax.axvspan(start, end, color="#F18F01", alpha=0.25, lw=0)

    for k, (name, prob) in enumerate(tracks_by_fit.items()):
        ax = axes[k + 1, 0]
        ax.fill_between(x, prob.p_peak[lo:hi], step="mid", color=COLORS[k % len(COLORS)], alpha=0.8)
        ax.set_ylim(0, 1.02)
        ax.set_ylabel(f"P(peak) {name}")
        ax.grid(axis="y", alpha=0.3, linestyle="--")
    axes[-1, 0].set_xlabel("position (bp)")
    plt.tight_layout()
    plt.savefig(out_path, dpi=150)
    plt.close(fig)
    return str(out_path)


def plot_objective_trace(trace: Sequence[float], out_path: str | Path, title: str = "ECM objective") -> str:
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(8, 4))
    if len(trace):
        ax.plot(np.arange(len(trace)), trace, marker="o", ms=3, color=COLORS[0])
    else:
        ax.text(0.5, 0.5, "No iterations recorded", ha="center", va="center", fontsize=14)
    ax.set_xlabel("iteration")
    ax.set_ylabel("penalized log-posterior")
    ax.set_title(title, fontsize=12, fontweight="bold")
    ax.grid(alpha=0.3, linestyle="--")
    plt.tight_layout()
    plt.savefig(out_path, dpi=150)
    plt.close(fig)
    return str(out_path)
