"""Convergence figures rendered to SVG files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .core import RunResult  # noqa: E402

# fixed ids and no timestamp so identical data gives identical files
_RC = {"svg.hashsalt": "bdpp", "svg.fonttype": "none", "font.size": 9, "axes.grid": True, "grid.alpha": 0.3}


def _series(result: RunResult):
    t = np.array([r.t for r in result.records], dtype=float)
    err = np.abs(np.array([r.objective_error for r in result.records]))
    viol = np.array([r.violation.max() for r in result.records])
    return t, err, viol


def plot_runs(path, runs: list[tuple[str, RunResult]], title: str | None = None) -> Path:
    """Two panels: |objective error| on log-log axes and max violation against log t.

    ``runs`` pairs a legend label with each result.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(_RC):
        fig, (ax_err, ax_viol) = plt.subplots(1, 2, figsize=(9, 3.6))
        for label, result in runs:
            t, err, viol = _series(result)
            pos = err > 0
            ax_err.loglog(t[pos], err[pos], lw=1.2, label=label)
            ax_viol.semilogx(t, viol, lw=1.2, label=label)
        ax_viol.axhline(0.0, color="k", lw=0.8, ls="--")
        ax_err.set_xlabel("iteration t")
        ax_err.set_ylabel("|objective error|")
        ax_viol.set_xlabel("iteration t")
        ax_viol.set_ylabel("max constraint value")
        ax_viol.legend(frameon=False, fontsize=8)
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
