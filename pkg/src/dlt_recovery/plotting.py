"""Figures rendered to files with the non-interactive Agg backend."""

from __future__ import annotations

from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .hashgraph import Fame, Hashgraph  # noqa: E402

params = {
    "font.size": 8,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.0,
    "lines.markersize": 4,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 150,
    "savefig.bbox": "tight",
    # fixed metadata keeps repeated renders byte-identical
    "svg.hashsalt": "dlt-recovery",
}


def _save(fig, path) -> None:
    fig.savefig(path, metadata={"Software": None} if str(path).endswith(".png") else None)
    plt.close(fig)


def plot_scaling(series: Mapping[int, Sequence], path) -> None:
    """Time to first consensus against membership size, one line per seed.

    ``series`` maps a seed to its list of scaling points.
    """
    with plt.rc_context(params):
        fig, ax = plt.subplots(figsize=(3.6, 2.4))
        for seed, points in series.items():
            done = [p for p in points if p.time_to_first_consensus_ms is not None]
            ax.plot([p.n_roles for p in done],
                    [p.time_to_first_consensus_ms / 1000 for p in done],
                    marker="o", alpha=0.8, label=f"seed {seed}")
        ax.set_xlabel("functional roles")
        ax.set_ylabel("first consensus (simulated s)")
        if len(series) > 1:
            ax.legend(frameon=False, ncol=2)
        _save(fig, path)


def plot_hashgraph(store: Hashgraph, path, names: Mapping[int, str] | None = None,
                   max_events: int = 120) -> None:
    """DAG with one column per creator and simulated time upwards.

    Famous witnesses are filled, other witnesses outlined, and ordered events
    labelled with their consensus position.
    """
    events = store.events[:max_events]
    creators = sorted({ev.creator for ev in events})
    col = {c: k for k, c in enumerate(creators)}
    pos = {ev.id: (col[ev.creator], ev.timestamp) for ev in events}
    with plt.rc_context(params):
        fig, ax = plt.subplots(figsize=(1.1 * len(creators) + 1.5, 6))
        for ev in events:
            x, y = pos[ev.id]
            for parent, style in ((ev.self_parent, "-"), (ev.other_parent, ":")):
                if parent in pos:
                    px, py = pos[parent]
                    ax.plot([px, x], [py, y], style, color="0.6", lw=0.6, zorder=1)
        for ev in events:
            x, y = pos[ev.id]
            info = store.round_info(ev.id)
            if info.fame is Fame.FAMOUS:
                face, edge = "tab:red", "tab:red"
            elif info.is_witness:
                face, edge = "white", "tab:red"
            else:
                face, edge = "tab:blue", "tab:blue"
            ax.scatter([x], [y], s=22, c=face, edgecolors=edge, zorder=2)
            if info.consensus_position is not None:
                ax.annotate(str(info.consensus_position), (x, y), xytext=(4, 0),
                            textcoords="offset points", fontsize=5, va="center")
        labels = [names.get(c, str(c)) if names else str(c) for c in creators]
        ax.set_xticks(range(len(creators)), labels, rotation=45, ha="right")
        ax.set_ylabel("claimed timestamp (ms)")
        _save(fig, path)
