"""Figure rendering for run reports.

Uses the object-oriented matplotlib API with the Agg canvas, so reports can
be produced headless and without touching pyplot global state.
"""

from __future__ import annotations

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .sample import fano_model

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
}
COLORS = ("tab:red", "black", "tab:blue", "tab:green")
MARKERS = ("o", "s", "^", "D")


def _new_figure(nrows, ncols, width=3.2, height=2.4):
    import matplotlib

    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=(width * ncols, height * nrows), dpi=120)
        FigureCanvasAgg(fig)
        axes = fig.subplots(nrows, ncols, squeeze=False, sharex="col")
    return fig, axes


def _save(fig, path):
    # no Software/date metadata, so reruns give identical files
    fig.savefig(path, metadata={"Software": None})


def plot_panel(ax, curves, title=""):
    """Draw normalized spectra with error bars and their fitted curves.

    `curves` is a list of ``(label, spectrum, fit_or_None)``.
    """
    for k, (label, spec, fit) in enumerate(curves):
        c = COLORS[k % len(COLORS)]
        ax.errorbar(spec.lambda_nm, spec.mean, yerr=spec.std, fmt=MARKERS[k % len(MARKERS)], ms=3,
                    color=c, mfc="none", elinewidth=0.6, capsize=0, label=label)
        if fit is not None:
            x = np.linspace(spec.lambda_nm[0], spec.lambda_nm[-1], 400)
            ax.plot(x, fano_model(fit.params, x), color=c, lw=1.0)
    ax.set_title(title, fontsize=8, loc="left")


def plot_grid(panels, path, xlabel="wavelength (nm)", ylabel="transmission"):
    """Rows x columns of spectrum panels.

    `panels` maps ``(row, col_label)`` to ``(title, curves)``, where `row` is
    an integer position and `curves` is a list for `plot_panel`.
    """
    rows = sorted({r for r, _ in panels})
    cols = sorted({c for _, c in panels}, key=lambda c: (c != "quantum", c))
    fig, axes = _new_figure(len(rows), len(cols))
    for i, r in enumerate(rows):
        for j, c in enumerate(cols):
            ax = axes[i][j]
            if (r, c) not in panels:
                ax.set_axis_off()
                continue
            title, curves = panels[(r, c)]
            plot_panel(ax, curves, title=title)
            if j == 0:
                ax.set_ylabel(ylabel)
            if i == len(rows) - 1:
                ax.set_xlabel(xlabel)
    axes[0][0].legend(loc="lower right", frameon=False)
    fig.tight_layout()
    _save(fig, path)
    return path
