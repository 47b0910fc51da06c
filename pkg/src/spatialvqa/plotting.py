"""Learning-curve figures (mean line, min/max band) written to image files."""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_curves(aggregates: Mapping, path: str | Path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, agg in aggregates.items():
        x = agg.iterations / 1000
        (line,) = ax.plot(x, agg.mean, label=name)
        ax.fill_between(x, agg.min, agg.max, color=line.get_color(), alpha=0.2, linewidth=0)
    ax.set_xlabel("iterations (thousands)")
    ax.set_ylabel("validation accuracy")
    ax.set_ylim(0.4, 1.0)
    ax.grid(alpha=0.3)
    if title:
        ax.set_title(title)
    ax.legend(fontsize="small", loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_report(experiments: Sequence, aggregates: Mapping, stem: Path) -> list[Path]:
    """One figure per caption type (experiments without a type share one figure)."""
    groups = defaultdict(dict)
    for e in experiments:
        groups[e.caption_type or "all"][e.model or e.name] = aggregates[e.name]
    return [plot_curves(group, f"{stem}-{kind}.png", f"spatial-{kind}" if kind != "all" else "")
            for kind, group in sorted(groups.items())]
