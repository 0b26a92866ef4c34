"""PNG figures rendered next to the CSV outputs."""
from __future__ import annotations

from pathlib import Path

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_solution(z, moments, path, title: str = "") -> Path:
    """Cell means of every moment component against z."""
    plt = _pyplot()
    moments = np.atleast_2d(np.asarray(moments, dtype=float))
    fig, ax = plt.subplots(figsize=(7, 4))
    for i in range(moments.shape[1]):
        ax.plot(z, moments[:, i], lw=1.5, label=f"$u_{i}$")
    ax.set_xlabel("z")
    ax.set_ylabel("cell mean")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, ncol=min(moments.shape[1], 4))
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_theta(records, path, title: str = "") -> Path:
    """Scatter of the realizability limiter value over the (z, t) plane."""
    plt = _pyplot()
    rec = np.asarray(records, dtype=float).reshape(-1, 3)
    fig, ax = plt.subplots(figsize=(6, 5))
    if len(rec):
        sc = ax.scatter(rec[:, 1], rec[:, 0], c=rec[:, 2], s=6, cmap="viridis", vmin=0.0,
                        vmax=max(float(rec[:, 2].max()), 1e-12))
        fig.colorbar(sc, ax=ax, label=r"$\theta$")
    else:
        ax.text(0.5, 0.5, "limiter inactive", ha="center", va="center", transform=ax.transAxes)
    ax.set_xlabel("z")
    ax.set_ylabel("t")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_convergence(nz, l1, linf, path, order: float | None = None, title: str = "") -> Path:
    """Log-log error curves with an optional reference slope."""
    plt = _pyplot()
    nz = np.asarray(nz, dtype=float)
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    ax.loglog(nz, l1, "o-", label=r"$L^1$")
    ax.loglog(nz, linf, "s--", label=r"$L^\infty$")
    if order is not None and len(nz) > 1 and l1[0] > 0:
        ax.loglog(nz, l1[0] * (nz / nz[0]) ** (-order), "k:", lw=1, label=f"order {order:g}")
    ax.set_xlabel("$n_z$")
    ax.set_ylabel("error")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
