"""SVG figures for model selection and hysteresis-loop fits.

Figures are built on :class:`matplotlib.figure.Figure` directly (no pyplot
state) and written with a fixed hash salt and no date stamp, so identical
inputs give identical files.
"""

from __future__ import annotations

import os
import tempfile

import matplotlib
import numpy as np
from matplotlib.figure import Figure

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.4,
    "svg.hashsalt": "hystkin",
    "svg.fonttype": "none",
}

COLORS = {"nominal": "#2ca02c", "cw": "#1f77b4", "ccw": "#d62728", "data": "0.35"}


def _figure(width=4.5, height=3.2):
    fig = Figure(figsize=(width, height))
    return fig, fig.add_subplot(111)


def _save(fig, path):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".svg")
    os.close(fd)
    try:
        with matplotlib.rc_context(STYLE):
            fig.savefig(tmp, format="svg", metadata={"Date": None}, bbox_inches="tight")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def plot_criteria(table, path, title=None):
    """BIC and AIC against the number of components."""
    with matplotlib.rc_context(STYLE):
        fig, ax = _figure()
        k = [r.k for r in table]
        ax.plot(k, [r.bic for r in table], "o-", label="BIC", color="#1f77b4", ms=3)
        ax.plot(k, [r.aic for r in table], "s--", label="AIC", color="#ff7f0e", ms=3)
        ax.set_xlabel("number of Gaussian components K")
        ax.set_ylabel("criterion value")
        ax.set_xticks(k)
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
    _save(fig, path)


def plot_loop(model, test, path, n_grid=201, title=None):
    """Test samples over the nominal, cw and ccw regression curves."""
    q = np.linspace(model.q_min, model.q_max, n_grid)
    with matplotlib.rc_context(STYLE):
        fig, ax = _figure(5.0, 3.6)
        ax.plot(test.q, test.gamma, ".", color=COLORS["data"], ms=2, label="test data")
        for name in ("nominal", "cw", "ccw"):
            ax.plot(q, getattr(model, name).predict_mean(q), color=COLORS[name], label=name)
        ax.set_xlabel("control input q")
        ax.set_ylabel("bending angle (deg)")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False, loc="upper left")
    _save(fig, path)
