"""Matplotlib figures written next to the CSV reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "creatorgame",  # stable element ids across runs
}

LABELS = {
    "nonstrategic": "non-strategic",
    "exposure_topk": "exposure top-K",
    "engagement_topk": "engagement top-K",
    "softmax_share": "softmax share",
    "winner_value": "winner value",
}


def _size(scale=1.0):
    width = 5.5 * scale
    return width, width * 0.62


def welfare_curves(curves: dict, path, ylabel="user welfare", title=None,
                   formats=("svg", "png")) -> list:
    """One errorbar line per mode.  ``curves[mode] = (lams, means, stderrs)``.

    Each line carries the SVG group id ``curve-<mode>``.
    """
    path = Path(path)
    written = []
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=_size())
        all_lams = []
        for mode, (lams, mean, se) in curves.items():
            lams = np.asarray(lams, dtype=float)
            all_lams.extend(lams)
            cont = ax.errorbar(lams, mean, yerr=se, marker="o", ms=3, capsize=2, lw=1.2,
                               ls="--" if mode == "nonstrategic" else "-",
                               label=LABELS.get(mode, mode))
            cont.lines[0].set_gid(f"curve-{mode}")
        positive = [x for x in all_lams if x > 0]
        if positive and max(positive) / min(positive) > 50:
            ax.set_xscale("symlog", linthresh=min(positive))
        ax.set_xlabel(r"regularisation $\lambda$")
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        fig.tight_layout()
        for fmt in formats:
            out = path.with_suffix("." + fmt)
            fig.savefig(out, metadata={"Date": None} if fmt == "svg" else None)
            written.append(out)
        plt.close(fig)
    return written


def dynamics_figure(trace, path, title=None, formats=("png",)) -> list:
    """Welfare and per-creator utility against LBR round."""
    path = Path(path)
    written = []
    with plt.rc_context(STYLE):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=_size(1.4))
        a1.plot(trace.steps, trace.welfare, lw=1.2)
        a1.set_xlabel("round")
        a1.set_ylabel("user welfare")
        for j in range(trace.utilities.shape[1]):
            a2.plot(trace.steps, trace.utilities[:, j], lw=0.8)
        a2.set_xlabel("round")
        a2.set_ylabel("creator utility")
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        for fmt in formats:
            out = path.with_suffix("." + fmt)
            fig.savefig(out)
            written.append(out)
        plt.close(fig)
    return written
