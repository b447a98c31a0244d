"""SVG line plots of benchmark summaries (matplotlib, Agg backend)."""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .io import atomic_write  # noqa: E402

METRIC_LABELS = {
    "rec_err": "reconstruction error",
    "blk_err": "block contribution error",
    "coef_err": "coefficient recovery error",
}


def line_plot_svg(series: dict, xlabel: str, ylabel: str, title: str = "") -> bytes:
    """Render ``{label: (xs, ys)}`` as an SVG document with stable bytes."""
    with plt.rc_context({"svg.hashsalt": "blocksparse", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for label in sorted(series):
            xs, ys = series[label]
            ax.plot(xs, ys, marker="o", label=label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buf.getvalue()


def write_metric_plots(summary_rows, out_dir, metrics=tuple(METRIC_LABELS)) -> list:
    """One SVG per metric, mean error against ``k`` for every solver variant.

    ``summary_rows`` are dicts with keys ``variant``, ``k`` and ``<metric>_mean``.
    Metrics with no finite values are skipped.  Returns the written paths.
    """
    from pathlib import Path

    out_dir = Path(out_dir)
    paths = []
    for metric in metrics:
        series = {}
        for row in summary_rows:
            value = row.get(f"{metric}_mean")
            if value is None or value != value:
                continue
            xs, ys = series.setdefault(row["variant"], ([], []))
            xs.append(row["k"])
            ys.append(value)
        if not series:
            continue
        path = out_dir / f"{metric}.svg"
        atomic_write(path, line_plot_svg(series, "k (nonzero blocks)", METRIC_LABELS[metric]))
        paths.append(path)
    return paths
