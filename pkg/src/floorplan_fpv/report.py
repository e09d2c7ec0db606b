"""Static SVG figures. Output is byte-stable: fixed hash salt, no timestamp."""

from __future__ import annotations

from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .attribution import AnomResult  # noqa: E402

_RC = {"svg.hashsalt": "floorplan-fpv", "svg.fonttype": "none", "font.size": 8}


@contextmanager
def _figure(path: str | Path, size: tuple[float, float]) -> Iterator[plt.Axes]:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=size)
        try:
            yield ax
            fig.tight_layout()
            fig.savefig(path, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)


def anom_chart(result: AnomResult, path: str | Path, title: str = "ANOM of standardized contributions") -> None:
    """Group means with their decision limits, one row per room or connection type."""
    rows = sorted(result.rows, key=lambda r: r.mean)
    y = np.arange(len(rows))
    with _figure(path, (6, max(3.0, 0.22 * len(rows)))) as ax:
        ax.hlines(y, [r.ldl for r in rows], [r.udl for r in rows], color="0.6", lw=2)
        ax.scatter([r.mean for r in rows], y, c=["tab:red" if r.significant else "black" for r in rows], s=14, zorder=3)
        ax.axvline(result.grand_mean, color="0.3", lw=0.8, ls="--")
        ax.set_yticks(y)
        ax.set_yticklabels([f"{r.group} ({r.n})" for r in rows], fontsize=7)
        ax.set_xlabel("mean standardized contribution")
        ax.set_title(title, fontsize=9)


def epoch_curve(epochs: Sequence[int], rmse: np.ndarray, path: str | Path, best: int | None = None) -> None:
    """Per-fold test RMSE against epoch, with the fold mean in bold."""
    rmse = np.asarray(rmse, dtype=np.float64)
    with _figure(path, (5, 3.2)) as ax:
        for row in rmse:
            if np.all(np.isfinite(row)):
                ax.plot(epochs, row, color="0.75", lw=0.8)
        ax.plot(epochs, np.nanmean(rmse, axis=0), color="black", lw=1.6, marker="o", ms=3)
        if best is not None:
            ax.axvline(best, color="tab:red", lw=0.8, ls="--")
        ax.set_xlabel("epoch")
        ax.set_ylabel("test RMSE")


def fold_boxplots(metrics: Mapping[str, Mapping[str, Sequence[float]]], path: str | Path) -> None:
    """One panel per metric, one box per model."""
    names = list(metrics)
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, len(names), figsize=(3.2 * len(names), 3.2), squeeze=False)
        try:
            for ax, metric in zip(axes[0], names):
                models = list(metrics[metric])
                ax.boxplot([np.asarray(metrics[metric][m], dtype=np.float64) for m in models])
                ax.set_xticks(range(1, len(models) + 1))
                ax.set_xticklabels(models)
                ax.set_title(metric)
            fig.tight_layout()
            fig.savefig(path, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)


def fpv_histogram(scores: Sequence[float], path: str | Path) -> None:
    with _figure(path, (4.5, 3)) as ax:
        ax.hist(np.asarray(scores, dtype=np.float64), bins=30, color="0.4")
        ax.set_xlabel("FPV deviation")
        ax.set_ylabel("count")
