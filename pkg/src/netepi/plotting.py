"""Figures written next to the delimited outputs of the CLI report commands.

Everything renders off-screen with the Agg backend.  PNG metadata that
would vary between runs is stripped so repeated runs produce identical files.
"""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import atomic_write  # noqa: E402

__all__ = ["style", "save", "trace_figure", "coverage_figure", "mse_figure", "dpp_figure",
           "degree_ppc_figure", "epidemic_ppc_figure"]

_RC = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}
GOLDEN = (5 ** 0.5 - 1) / 2


def style(width: float = 4.5, ratio: float = GOLDEN, nrows: int = 1, ncols: int = 1):
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(nrows, ncols, figsize=(width, width * ratio), squeeze=False)
    return fig, axes


def save(fig, path) -> None:
    buf = io.BytesIO()
    with plt.rc_context(_RC):
        fig.tight_layout()
        fig.savefig(buf, format="png", metadata={"Software": None})
    plt.close(fig)
    atomic_write(path, buf.getvalue())


def trace_figure(traces: dict, path) -> None:
    """One panel per named scalar trace."""
    names = list(traces)
    fig, axes = style(6.0, 0.3 * max(len(names), 1), nrows=max(len(names), 1))
    for ax, name in zip(axes[:, 0], names):
        ax.plot(traces[name], lw=0.6, color="0.2")
        ax.set_ylabel(name)
    axes[-1, 0].set_xlabel("retained draw")
    save(fig, path)


def coverage_figure(rows: list, level: float, path) -> None:
    fig, axes = style()
    ax = axes[0, 0]
    names = [r["parameter"] for r in rows]
    ax.bar(range(len(rows)), [r["coverage"] for r in rows], color="0.6")
    ax.axhline(level, color="k", lw=0.8, ls="--")
    ax.set_xticks(range(len(rows)), names, rotation=45, ha="right")
    ax.set_ylim(0, 1)
    ax.set_ylabel("interval coverage")
    save(fig, path)


def mse_figure(rows: list, path, stat: str = "mse_median") -> None:
    params = list(dict.fromkeys(r["parameter"] for r in rows))
    fig, axes = style(6.0, 0.6, nrows=1, ncols=2)
    for ax, group in zip(axes[0], (lambda p: not p.startswith("gamma"), lambda p: p.startswith("gamma"))):
        for p in filter(group, params):
            pts = [(r["n"], r[stat]) for r in rows if r["parameter"] == p]
            ax.plot(*zip(*pts), marker="o", ms=3, label=p)
        ax.set_xlabel("sampled members n")
        ax.set_ylabel(stat.replace("_", " "))
        if ax.lines:
            ax.legend(frameon=False)
    save(fig, path)


def dpp_figure(expected: list, path, n_panels: int = 2) -> None:
    """Histograms of expected degrees for the draws with the smallest and largest maximum."""
    order = np.argsort([np.max(e) for e in expected])
    picks = [order[0], order[-1]][:n_panels]
    fig, axes = style(6.0, 0.4, ncols=len(picks))
    for ax, t in zip(axes[0], picks):
        ax.hist(expected[t], bins=40, color="0.5")
        ax.set_xlabel("expected degree")
        ax.set_title(f"max {np.max(expected[t]):.0f}")
    axes[0, 0].set_ylabel("members")
    save(fig, path)


def degree_ppc_figure(histograms: np.ndarray, path, observed=None) -> None:
    h = np.asarray(histograms, dtype=float)
    top = int(np.max(np.nonzero(h.sum(axis=0))[0], initial=0)) + 1
    x = np.arange(top)
    fig, axes = style()
    ax = axes[0, 0]
    lo, mid, hi = np.quantile(h[:, :top], [0.05, 0.5, 0.95], axis=0)
    ax.fill_between(x, lo, hi, color="0.8", step="mid")
    ax.step(x, mid, where="mid", color="k", lw=0.8)
    if observed is not None:
        ax.plot(x, np.asarray(observed)[:top], "o", ms=2, color="C3")
    ax.set_xlabel("degree")
    ax.set_ylabel("members")
    save(fig, path)


def epidemic_ppc_figure(samples, path, observed=None, interval=None) -> None:
    s = np.asarray(samples)
    fig, axes = style()
    ax = axes[0, 0]
    ax.hist(s, bins=np.arange(s.min(), s.max() + 2) - 0.5, color="0.6")
    if observed is not None:
        ax.axvline(observed, color="C3", lw=1)
    if interval is not None:
        for v in interval:
            ax.axvline(v, color="k", lw=0.8, ls="--")
    ax.set_xlabel("peak number infectious")
    ax.set_ylabel("draws")
    save(fig, path)
