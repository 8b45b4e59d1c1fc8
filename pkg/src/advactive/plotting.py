"""Static SVG line charts of averaged test-error curves."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import ValidationError  # noqa: E402

STYLE = {
    "svg.hashsalt": "advactive",
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
}


def render_plot(curves: Sequence[tuple[str, object]], path, title: str | None = None) -> Path:
    """Draw one line per ``(name, curve)`` pair and save it as SVG.

    ``curve`` is an :class:`~advactive.harness.ErrorCurve` or a 1-D array of
    mean errors indexed by query number. Each line carries the SVG id
    ``curve-<k>`` in input order. Output is byte-identical for identical input.
    """
    if not curves:
        raise ValidationError("render_plot needs at least one curve")
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        top = 0.0
        for k, (name, curve) in enumerate(curves):
            y = np.asarray(curve if isinstance(curve, np.ndarray) else getattr(curve, "mean", curve), dtype=float)
            (line,) = ax.plot(np.arange(len(y)), y, label=name, linewidth=1.4)
            line.set_gid(f"curve-{k}")
            top = max(top, float(np.max(y)) if len(y) else 0.0)
        ax.set_xlabel("query number")
        ax.set_ylabel("mean test error")
        ax.set_ylim(0.0, top * 1.05 if top > 0 else 1.0)
        ax.set_xlim(left=0)
        if title:
            ax.set_title(title)
        ax.legend(loc="upper right")
        fig.tight_layout()
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
