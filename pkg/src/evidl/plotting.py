"""Report figures: pessimism-index curves, tolerance sweeps, dendrograms, training curves.

Everything renders off-screen (Agg) straight to files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "legend.fontsize": 8,
    "legend.frameon": False,
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_nu_curves(rows: list[dict], path) -> Path:
    """Averaged utility against nu, one line per gamma."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        for gamma in sorted({r["gamma"] for r in rows}):
            pts = sorted((r["nu"], r["averaged_utility"]) for r in rows if r["gamma"] == gamma)
            ax.plot(*zip(*pts), marker="o", ms=3, label=f"γ={gamma:g}")
        ax.set_xlabel("pessimism index ν")
        ax.set_ylabel("averaged utility")
        ax.legend(ncol=2)
        return _save(fig, path)


def plot_gamma_sweep(best_rows: list[dict], path) -> Path:
    """Utility, cardinality and Ω-rates against gamma at the selected nu."""
    rows = sorted(best_rows, key=lambda r: r["gamma"])
    g = [r["gamma"] for r in rows]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 3, figsize=(10, 3))
        axes[0].plot(g, [r["averaged_utility"] for r in rows], marker="o", ms=3)
        axes[0].set_ylabel("averaged utility")
        axes[1].plot(g, [r["averaged_cardinality"] for r in rows], marker="o", ms=3)
        axes[1].set_ylabel("averaged cardinality")
        axes[2].plot(g, [r["omega_rate_inliers"] for r in rows], marker="o", ms=3, label="inliers")
        axes[2].plot(g, [r["omega_rate_outliers"] for r in rows], marker="s", ms=3, label="outliers")
        axes[2].set_ylabel("rate of Ω decisions")
        axes[2].set_ylim(-0.02, 1.02)
        axes[2].legend()
        for ax in axes:
            ax.set_xlabel("imprecision tolerance γ")
        fig.tight_layout()
        return _save(fig, path)


def plot_act_selection(tree, cut, labels, path) -> Path:
    """Dendrogram with the cut threshold, next to CHI per cluster count."""
    from scipy.cluster.hierarchy import dendrogram

    with plt.rc_context(STYLE):
        fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 3.2))
        dendrogram(tree.to_scipy(), labels=list(labels), ax=ax0, color_threshold=cut.threshold)
        ax0.axhline(cut.threshold, ls="--", color="k", lw=0.8)
        ax0.set_ylabel("merge height")
        ax0.set_title(f"{tree.linkage} linkage", fontsize=9)
        ks = sorted(cut.chi_values)
        vals = [cut.chi_values[k] for k in ks]
        finite = [v if np.isfinite(v) else np.nan for v in vals]
        ax1.plot(ks, finite, marker="o", ms=4)
        ax1.axvline(cut.n_clusters, ls="--", color="k", lw=0.8)
        ax1.set_xlabel("number of clusters")
        ax1.set_ylabel("Calinski-Harabasz index")
        fig.tight_layout()
        return _save(fig, path)


def plot_training(history, path) -> Path:
    epochs = [h.epoch for h in history]
    with plt.rc_context(STYLE):
        fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(8, 3))
        ax0.plot(epochs, [h.train_loss for h in history], label="train")
        ax1.plot(epochs, [h.train_acc for h in history], label="train")
        if any(np.isfinite(h.val_loss) for h in history):
            ax0.plot(epochs, [h.val_loss for h in history], label="validation")
            ax1.plot(epochs, [h.val_acc for h in history], label="validation")
        ax0.set_ylabel("loss")
        ax1.set_ylabel("precise accuracy")
        for ax in (ax0, ax1):
            ax.set_xlabel("epoch")
            ax.legend()
        fig.tight_layout()
        return _save(fig, path)
