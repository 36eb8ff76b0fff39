"""Figure rendering for reports and demo drivers (Agg backend, files only)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _finish(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_marginals_figure(marginals, selected, path, title="Inclusion marginals"):
    marginals = np.asarray(marginals, dtype=float)
    m = marginals.shape[0]
    colors = ["tab:orange" if i in set(selected) else "tab:blue" for i in range(m)]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.25 * m), 3.2))
    ax.bar(np.arange(m), marginals, color=colors)
    ax.axhline(0.5, color="gray", lw=0.8, ls="--")
    ax.set_xlabel("feature index")
    ax.set_ylabel("inclusion probability")
    ax.set_ylim(0, 1.02)
    ax.set_title(title)
    _finish(fig, path)


def save_fig1_figure(rows, path):
    """Expected vs. empirical per-block selection counts against the
    similarity-block condition number."""
    ratios = [row["ratio"] for row in rows]
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.plot(ratios, [r["block_expected"] for r in rows], "o-", label="block, exact")
    ax.plot(
        ratios,
        [r["block_empirical"] for r in rows],
        "s--",
        label="block, sampled",
    )
    ax.plot(
        ratios,
        [r["singleton_expected"] for r in rows],
        "k:",
        label="per singleton, exact",
    )
    ax.set_xscale("log")
    ax.set_xlabel("eigenvalue ratio of the similar block")
    ax.set_ylabel("expected items selected")
    ax.legend(fontsize=8)
    _finish(fig, path)


def save_spatial_figure(config, sensors, field_values, results, path):
    """Field heatmap with sensors and each method's selected centers."""
    from .spatial import synthetic_field

    (x0, y0), (x1, y1) = config.domain
    gx, gy = np.meshgrid(np.linspace(x0, x1, 80), np.linspace(y0, y1, 80))
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    zz = synthetic_field(grid, config).reshape(gx.shape)
    n = len(results)
    fig, axes = plt.subplots(1, n, figsize=(4.0 * n, 3.6), squeeze=False)
    for ax, entry in zip(axes[0], results):
        ax.contourf(gx, gy, zz, levels=20, cmap="viridis", alpha=0.8)
        ax.scatter(sensors[:, 0], sensors[:, 1], s=6, c="white", alpha=0.6)
        centers = np.asarray(entry["selected_centers"], dtype=float)
        if centers.size:
            ax.scatter(
                centers[:, 0],
                centers[:, 1],
                s=60,
                facecolors="none",
                edgecolors="red",
                linewidths=1.5,
            )
        ax.set_title(
            f"{entry['method']}  (MSE {entry['predictive_mse']:.3g})", fontsize=9
        )
        ax.set_xticks([])
        ax.set_yticks([])
    _finish(fig, path)


def save_collinearity_figure(rows, path):
    """Per-seed diversity log-determinants, DPP posterior vs. mean field."""
    seeds = [row["seed"] for row in rows]
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    ax.plot(seeds, [r["logdet_dpp"] for r in rows], "o-", label="bernoulli_dpp")
    ax.plot(seeds, [r["logdet_meanfield"] for r in rows], "s--", label="meanfield")
    ax.set_xlabel("seed")
    ax.set_ylabel("log det of selected similarity submatrix")
    ax.legend(fontsize=8)
    _finish(fig, path)
