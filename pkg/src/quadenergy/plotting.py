"""Standalone SVG log-log plots of scan reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {
    "svg.hashsalt": "quadenergy",
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def plot_scan(report, path, title: str | None = None) -> None:
    """Energy against delta on log2 axes, one marker per row plus the fitted line.

    Markers carry ids ``point-<i>`` and the fit line ``fit-line`` so the SVG
    can be checked structurally. Output is byte-stable for a given report.
    """
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.4))
        x = np.log2([r.delta for r in report.rows]) if report.rows else np.zeros(0)
        y = np.log2([r.energy for r in report.rows]) if report.rows else np.zeros(0)
        for i, (xi, yi) in enumerate(zip(x, y)):
            ax.plot([xi], [yi], "o", color="tab:blue", markersize=4, gid=f"point-{i}")
        if report.fit is not None:
            xs = np.array([x.min(), x.max()])
            ax.plot(xs, report.fit.intercept + report.fit.slope * xs, "-", color="tab:red",
                    linewidth=1, gid="fit-line",
                    label=f"slope {report.fit.slope:.3f} (claimed {report.claimed_exponent:.3f})")
            ax.legend(loc="best", frameon=False)
        ax.set_xlabel(r"$\log_2 \delta$")
        ax.set_ylabel(r"$\log_2$ energy")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
