"""Figure rendering for the CLI report paths.

Figures are written next to the CSV/JSON outputs as PNG files; the
delimited files remain the machine-readable contract and the figures are a
human-readable mirror of the same data.
"""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .storage import atomic_write_bytes


def _save(fig, path) -> None:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=150)
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def save_chart_figure(path, Z: np.ndarray, positions: np.ndarray | None = None) -> None:
    """Scatter the chart; when true positions are known, color by each
    coordinate so spatial continuity is visible at a glance."""
    if positions is not None:
        fig, axes = plt.subplots(1, 2, figsize=(9.5, 4.2), constrained_layout=True)
        for ax, coord, label in zip(axes, positions.T, ("x [m]", "y [m]")):
            sc = ax.scatter(Z[0], Z[1], c=coord, s=8, cmap="viridis")
            ax.set_xlabel("chart dim 1")
            ax.set_ylabel("chart dim 2")
            fig.colorbar(sc, ax=ax, label=f"true {label}")
    else:
        fig, ax = plt.subplots(figsize=(5.0, 4.2), constrained_layout=True)
        ax.scatter(Z[0], Z[1], s=8)
        ax.set_xlabel("chart dim 1")
        ax.set_ylabel("chart dim 2")
    fig.suptitle("Calibration channel chart")
    _save(fig, path)


def save_rho_cdf_figure(path, cdf: np.ndarray, median: float, mean: float) -> None:
    fig, ax = plt.subplots(figsize=(5.5, 4.0), constrained_layout=True)
    ax.plot(cdf[:, 0], cdf[:, 1])
    ax.axvline(median, color="gray", ls="--", lw=0.8, label=f"median = {median:.3f}")
    ax.axvline(mean, color="gray", ls=":", lw=0.8, label=f"mean = {mean:.3f}")
    ax.set_xlabel("squared cosine alignment")
    ax.set_ylabel("cumulative fraction")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(loc="upper left")
    _save(fig, path)


_CURVE_STYLES = {
    "true_mmse": dict(color="tab:blue", ls="-", label="true MMSE"),
    "true_mrt": dict(color="tab:orange", ls="-", label="true MRT"),
    "learned_mmse": dict(color="tab:blue", ls="--", label="learned MMSE"),
    "learned_mrt": dict(color="tab:orange", ls="--", label="learned MRT"),
}


def save_sum_rate_figure(path, snr_db: np.ndarray, rates: dict) -> None:
    fig, ax = plt.subplots(figsize=(5.5, 4.0), constrained_layout=True)
    for name, style in _CURVE_STYLES.items():
        if name in rates:
            ax.plot(snr_db, rates[name], marker="o", ms=3, **style)
    ax.set_xlabel("SNR [dB]")
    ax.set_ylabel("sum rate [bit/s/Hz]")
    ax.grid(alpha=0.3)
    ax.legend()
    _save(fig, path)


def save_training_curves_figure(path, log) -> None:
    epochs = [row.epoch for row in log]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.5, 3.8), constrained_layout=True)
    ax1.plot(epochs, [row.train_loss for row in log])
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("training loss")
    ax1.grid(alpha=0.3)
    ax2.plot(epochs, [row.val_median_rho for row in log], label="median")
    ax2.plot(epochs, [row.val_mean_rho for row in log], label="mean")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("validation alignment")
    ax2.grid(alpha=0.3)
    ax2.legend()
    _save(fig, path)
