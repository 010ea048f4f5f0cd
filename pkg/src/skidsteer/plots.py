"""Matplotlib renderings of the evaluation reports (PNG, written next to the CSVs)."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from skidsteer.evaluation import ErrorGrid, ErrorSample, RotationCurve, SweepResult  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.linestyle": "--",
    "grid.alpha": 0.4,
    "figure.dpi": 100,
}


def _save(fig, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    # no software/date metadata, so identical data gives identical bytes
    fig.savefig(tmp, format="png", metadata={"Software": None})
    plt.close(fig)
    os.replace(tmp, path)
    return path


def error_distributions(samples: Mapping[str, Sequence[ErrorSample]], path) -> Path:
    """Violins of eps_t and eps_theta per model, with the quartile box overlaid."""
    names = list(samples)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(3.0 + 1.2 * len(names), 3.2))
        for ax, metric, label in zip(axes, ("eps_t", "eps_theta"),
                                     (r"$\varepsilon_t$ [m/m]", r"$\varepsilon_\theta$ [rad/m]")):
            data = [np.array([getattr(s, metric) for s in samples[n]]) for n in names]
            pos = np.arange(1, len(names) + 1)
            ax.violinplot(data, positions=pos, showextrema=False)
            ax.boxplot(data, positions=pos, widths=0.25, showfliers=False, whis=0.0,
                       patch_artist=True, boxprops={"facecolor": "0.8"})
            ax.set_xticks(pos)
            ax.set_xticklabels(names, rotation=30, ha="right")
            ax.set_ylabel(label)
        fig.tight_layout()
        return _save(fig, path)


def rotation_response(curve: RotationCurve, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 3.2))
        if curve.centers.size:
            q25 = [s.q25 for s in curve.summaries]
            q75 = [s.q75 for s in curve.summaries]
            ax.fill_between(curve.centers, q25, q75, alpha=0.3, lw=0)
            ax.plot(curve.centers, curve.medians, "-", lw=1.5)
            top = float(max(curve.centers.max(), max(q75)))
            ax.plot([0, top], [0, top], "k:", lw=0.8)
        ax.set_xlabel("commanded rotation [rad/m]")
        ax.set_ylabel("measured rotation [rad/m]")
        fig.tight_layout()
        return _save(fig, path)


def error_grid(grid: ErrorGrid, path) -> Path:
    with plt.rc_context(STYLE | {"axes.grid": False}):
        fig, ax = plt.subplots(figsize=(4.2, 3.5))
        masked = np.ma.masked_invalid(grid.median)
        mesh = ax.pcolormesh(grid.edges_r, grid.edges_l, masked, cmap="viridis")
        fig.colorbar(mesh, ax=ax, label=r"median $\varepsilon_\theta$ [rad/m]")
        ax.set_xlabel(r"mean $\omega_r$ [rad/s]")
        ax.set_ylabel(r"mean $\omega_l$ [rad/s]")
        fig.tight_layout()
        return _save(fig, path)


def horizon_sweep(result: SweepResult, path) -> Path:
    """Median (left) and IQR (right) of eps_t vs h_e, one line per h_t."""
    with plt.rc_context(STYLE):
        fig, (left, right) = plt.subplots(1, 2, figsize=(7.0, 3.0), sharex=True)
        for i, h_t in enumerate(result.train_horizons):
            label = f"$h_t$={h_t:g}"
            left.plot(result.eval_horizons, result.median[i], "o-", ms=3, label=label)
            right.plot(result.eval_horizons, result.iqr[i], "o-", ms=3, label=label)
        left.set_ylabel(r"median $\varepsilon_t$ [m/m]")
        right.set_ylabel(r"IQR $\varepsilon_t$ [m/m]")
        for ax in (left, right):
            ax.set_xlabel("$h_e$")
        left.legend()
        fig.suptitle(result.variant)
        fig.tight_layout()
        return _save(fig, path)
