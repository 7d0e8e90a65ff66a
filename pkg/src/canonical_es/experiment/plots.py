"""Training-curve charts as standalone SVG files."""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Dict, Optional, Sequence, Union

import numpy as np

from .report import read_trace

log = logging.getLogger(__name__)

X_AXES = ("iteration", "frames")
Y_SERIES = ("center", "best", "mean")


def median_smooth(values, window: int) -> np.ndarray:
    """Trailing running median over the last ``window`` finite values; NaNs stay NaN."""
    if window < 1:
        raise ValueError("window must be >= 1")
    v = np.asarray(values, dtype=np.float64)
    out = v.copy()
    if window == 1:
        return out
    for i in range(v.shape[0]):
        if math.isnan(v[i]):
            continue
        seg = v[max(0, i - window + 1):i + 1]
        out[i] = np.median(seg[~np.isnan(seg)])
    return out


def _series(rows, x: str, y: str):
    xs = np.array([getattr(r, x) for r in rows], dtype=np.float64)
    ys = np.array([getattr(r, y) for r in rows], dtype=np.float64)
    keep = ~np.isnan(ys)
    return xs[keep], ys[keep]


def emit_plots(traces: Union[Sequence[Union[str, Path]], Dict[str, Union[str, Path]]], out: Union[str, Path],
               *, x: str = "iteration", y: str = "center", window: int = 5,
               title: Optional[str] = None) -> Optional[Path]:
    """Plot one raw and one smoothed line per trace; returns ``None`` if nothing was plottable.

    ``y="center"`` falls back to ``best`` for traces without center scores.
    """
    if x not in X_AXES or y not in Y_SERIES:
        raise ValueError(f"x must be in {X_AXES} and y in {Y_SERIES}")
    if not isinstance(traces, dict):
        traces = {Path(p).parent.name or Path(p).stem: p for p in traces}
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.2))
    plotted = 0
    for label, path in traces.items():
        rows = read_trace(path)
        xs, ys = _series(rows, x, y)
        col = y
        if ys.size == 0 and y == "center":
            xs, ys = _series(rows, x, "best")
            col = "best"
        if ys.size == 0:
            log.warning("trace %s has no %s scores; skipped", path, y)
            continue
        line, = ax.plot(xs, ys, alpha=0.35, linewidth=1)
        smooth = median_smooth(ys, window)
        ax.plot(xs, smooth, color=line.get_color(), linewidth=1.8, label=f"{label} ({col}, median {window})")
        if ys.size == 1:
            ax.plot(xs, ys, "o", color=line.get_color())
        plotted += 1
    if not plotted:
        plt.close(fig)
        return None
    ax.set_xlabel("iteration" if x == "iteration" else "training frames")
    ax.set_ylabel("score")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    # fixed salt and no date keep the SVG bytes reproducible
    with matplotlib.rc_context({"svg.hashsalt": "canonical-es"}):
        fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out
