"""Figure helpers. All figures are written as deterministic SVG."""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Mapping, Sequence

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
    "lines.linewidth": 1.4,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.figsize": (4.2, 3.0),
    # fixed salt and no timestamp so identical data give identical bytes
    "svg.hashsalt": "gem-mix",
    "svg.fonttype": "none",
}


def new_figure():
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
    return fig, ax


def save_svg(fig, path: str | Path) -> Path:
    path = Path(path)
    with plt.rc_context(STYLE):
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _colors(k: int) -> list:
    cmap = plt.get_cmap("viridis")
    return [cmap(x) for x in np.linspace(0.05, 0.9, max(k, 1))]


def convergence_curves(curves: Mapping[float, tuple[np.ndarray, np.ndarray]], path: str | Path, title: str = "") -> Path:
    """Mean log error with a one-sd band, one line per SNR."""
    with plt.rc_context(STYLE):
        fig, ax = new_figure()
        for color, (snr, (mean, sd)) in zip(_colors(len(curves)), curves.items()):
            t = np.arange(len(mean))
            ax.plot(t, mean, color=color, label=f"SNR={snr:g}")
            ax.fill_between(t, mean - sd, mean + sd, color=color, alpha=0.2, linewidth=0)
        ax.set_xlabel("iteration t")
        ax.set_ylabel(r"mean log $\|\mu^t-\mu_{ref}\|$")
        if title:
            ax.set_title(title)
        ax.legend()
        return save_svg(fig, path)


def region_error(eps: Sequence[float], errors: np.ndarray, path: str | Path) -> Path:
    """Final error (per trial and median) against the offset from the midpoint."""
    eps = np.asarray(eps, dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = new_figure()
        for trial in errors.T:
            ax.plot(eps, trial, color="0.7", marker=".", linewidth=0.6)
        ax.plot(eps, np.median(errors, axis=1), color="C0", marker="o", label="median")
        ax.set_xscale("symlog", linthresh=max(eps[eps > 0].min(), 1e-3) if np.any(eps > 0) else 1e-3)
        ax.set_xlabel(r"$\epsilon / R_{min}$")
        ax.set_ylabel(r"final $\|\mu^T-\mu^*\| / R_{min}$")
        ax.legend()
        return save_svg(fig, path)


def region_paths(paths: Mapping[float, np.ndarray], truth: np.ndarray, path: str | Path) -> Path:
    """Iterate paths in the plane of the first two coordinates."""
    with plt.rc_context(STYLE):
        fig, ax = new_figure()
        for color, (eps, it) in zip(_colors(len(paths)), paths.items()):
            for k in range(it.shape[1]):
                ax.plot(it[:, k, 0], it[:, k, 1], color=color, linewidth=0.9,
                        label=rf"$\epsilon/R_{{min}}={eps:g}$" if k == 0 else None)
                ax.plot(it[-1, k, 0], it[-1, k, 1], "x", color=color)
        ax.plot(truth[:, 0], truth[:, 1], "k*", markersize=8, label="truth")
        ax.set_aspect("equal", adjustable="datalim")
        ax.legend()
        return save_svg(fig, path)


def loglog_lines(series: Mapping[str, tuple[Sequence[float], Sequence[float]]], path: str | Path,
                 xlabel: str, ylabel: str, reference_slope: float | None = None) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = new_figure()
        for color, (label, (x, y)) in zip(_colors(len(series)), series.items()):
            ax.loglog(x, y, marker="o", color=color, label=label)
        if reference_slope is not None and series:
            x, y = next(iter(series.values()))
            x = np.asarray(x, float)
            ax.loglog(x, y[0] * (x / x[0]) ** reference_slope, "k--", linewidth=0.8,
                      label=f"slope {reference_slope:g}")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.legend()
        return save_svg(fig, path)


def semilogy_lines(x: Sequence[float], series: Mapping[str, Iterable[float]], path: str | Path,
                   xlabel: str, ylabel: str) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = new_figure()
        for color, (label, y) in zip(_colors(len(series)), series.items()):
            ax.semilogy(x, list(y), marker="o", color=color, label=label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.legend()
        return save_svg(fig, path)
