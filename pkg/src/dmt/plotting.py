"""Power curves rendered to byte-stable SVG."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_STYLE = {
    "svg.hashsalt": "dmt",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.4,
    "lines.markersize": 4,
}


def plot_power_curves(curves: dict[str, list[tuple[float, float]]], path, title: str = "") -> Path:
    """One polyline per test kind: acceptance rate against signal scale.

    ``curves`` maps a test name to ``(scale, acceptance_rate)`` pairs. The SVG
    carries no timestamp and uses a fixed hash salt, so equal input gives
    equal bytes.
    """
    path = Path(path)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        for name in sorted(curves):
            pts = curves[name]
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=name)
        ax.set_xlabel("scale")
        ax.set_ylabel("acceptance rate")
        ax.set_ylim(-0.02, 1.02)
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
