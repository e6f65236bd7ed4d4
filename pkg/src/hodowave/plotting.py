"""Figures for the report subcommand (matplotlib, Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams.update({"figure.dpi": 110, "savefig.bbox": "tight", "axes.grid": True,
                     "grid.alpha": 0.3, "font.size": 9})


def _save(fig, path: Path) -> Path:
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_dispersion(table: np.ndarray, tau_star: float, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.plot(table[:, 0], table[:, 1], "k-")
    ax.axhline(0.0, color="0.5", lw=0.8)
    ax.axvline(tau_star, color="C3", ls="--", lw=0.8, label=r"$\tau_*$")
    ax.set_xlabel(r"$\tau$")
    ax.set_ylabel(r"$\sigma(\tau)$")
    ax.legend()
    return _save(fig, path)


def plot_branch(t, amplitude, lam, mu, t0, path: Path) -> Path:
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.2))
    axes[0].plot(t, amplitude, "k.-", ms=3)
    axes[0].set_ylabel("amplitude")
    axes[1].plot(t, lam, "k.-", ms=3)
    axes[1].set_ylabel(r"$\lambda$")
    mu = np.asarray(mu)
    for j in range(mu.shape[1]):
        axes[2].plot(t, mu[:, j], ".-", ms=3, label=rf"$\mu_{j}$")
    axes[2].set_ylim(max(np.min(mu[:, 1]) - 1.0, -5.0), min(np.max(mu[:, 2]) + 1.0, 15.0))
    axes[2].axhline(0.0, color="0.5", lw=0.8)
    axes[2].legend(fontsize=7)
    for ax in axes:
        ax.set_xlabel("t")
        if t0 is not None:
            ax.axvline(t0, color="C3", ls="--", lw=0.8)
    return _save(fig, path)


def plot_bloch(curves: list, path: Path) -> Path:
    """curves: list of (t, tau_over_tau_star, values[n_tau, J])."""
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.4))
    cmap = plt.get_cmap("viridis")
    for k, (t, x, vals) in enumerate(curves):
        col = cmap(k / max(len(curves) - 1, 1))
        axes[0].plot(x, vals[:, 1], color=col, label=f"t={t:.4f}")
        axes[1].plot(x, vals[:, 2], color=col)
    axes[0].set_ylabel(r"$\hat\mu_1$")
    axes[1].set_ylabel(r"$\hat\mu_2$")
    for ax in axes:
        ax.axhline(0.0, color="0.5", lw=0.8)
        ax.set_xlabel(r"$\tau/\tau_*$")
    axes[0].legend(fontsize=6)
    return _save(fig, path)


def plot_profiles(profiles: list, path: Path) -> Path:
    """profiles: list of (label, X, Xi)."""
    fig, ax = plt.subplots(figsize=(6, 3.2))
    for label, X, Xi in profiles:
        ax.plot(X, Xi, label=label)
    ax.set_xlabel("X")
    ax.set_ylabel(r"$\Xi$")
    ax.legend(fontsize=7)
    return _save(fig, path)


def plot_subharmonic(points: list, t0, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    if points:
        M = [p["M"] for p in points]
        tM = [p["t_M"] for p in points]
        ax.plot(M, tM, "ko-")
    if t0 is not None:
        ax.axhline(t0, color="C3", ls="--", lw=0.8, label=r"$t_0$")
        ax.legend()
    ax.set_xlabel("M")
    ax.set_ylabel(r"$t_M$")
    ax.ticklabel_format(axis="y", useOffset=False)
    return _save(fig, path)


def plot_monitors(monitors: list, path: Path) -> Path:
    t = [m["t"] for m in monitors]
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.0))
    for ax, key in zip(axes, ("max_slope", "min_R_minus_Xi", "min_bottom_velocity")):
        ax.plot(t, [m[key] for m in monitors], "k.-", ms=3)
        ax.set_ylabel(key.replace("_", " "))
        ax.set_xlabel("t")
    axes[1].axhline(0.0, color="0.5", lw=0.8)
    return _save(fig, path)
