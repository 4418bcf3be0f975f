"""Report figures written next to the CLI's delimited output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 120,
    "savefig.bbox": "tight",
}


def _save(fig, path):
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_training(log: list[dict], path):
    """Loss and PCK per epoch, stage boundary marked."""
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3))
        ep = [r["epoch"] for r in log]
        ax1.plot(ep, [r["loss"] for r in log], lw=1.2)
        ax1.set_xlabel("epoch")
        ax1.set_ylabel("KL loss")
        if any("pck" in r for r in log):
            ax2.plot(ep, [r.get("pck", np.nan) for r in log], label="raw", lw=1.2)
            ax2.plot(ep, [r.get("ema_pck", np.nan) for r in log], label="EMA", lw=1.2, ls="--")
            ax2.set_ylim(0, 1.02)
            ax2.legend(frameon=False)
        ax2.set_xlabel("epoch")
        ax2.set_ylabel("PCK@0.1")
        weak = [r["epoch"] for r in log if r["stage"] == "weak"]
        if weak:
            for ax in (ax1, ax2):
                ax.axvline(weak[0] - 0.5, color="0.5", lw=0.8, ls=":")
        return _save(fig, path)


def plot_latency(stats: dict, path):
    """Horizontal bars of median per-stage latency with mean as a tick."""
    with plt.rc_context(STYLE):
        names = list(stats)
        med = [stats[n]["median_ms"] for n in names]
        mean = [stats[n]["mean_ms"] for n in names]
        fig, ax = plt.subplots(figsize=(5, 0.5 + 0.4 * len(names)))
        y = np.arange(len(names))
        ax.barh(y, med, color="C0", alpha=0.8, label="median")
        ax.plot(mean, y, "k|", ms=12, label="mean")
        ax.set_yticks(y, names)
        ax.invert_yaxis()
        ax.set_xlabel("ms per call")
        ax.legend(frameon=False, loc="lower right")
        return _save(fig, path)


def plot_ap(per_threshold: dict, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4, 3))
        t = sorted(per_threshold)
        ax.plot(t, [per_threshold[x] for x in t], "o-", ms=3)
        ax.set_xlabel("OKS threshold")
        ax.set_ylabel("AP")
        ax.set_ylim(-0.02, 1.02)
        return _save(fig, path)


def plot_frame(image: np.ndarray, poses, path, boxes=()):
    """A frame with its poses and boxes drawn on top."""
    with plt.rc_context(STYLE | {"axes.grid": False}):
        fig, ax = plt.subplots(figsize=(4, 4 * image.shape[1] / image.shape[2]))
        ax.imshow(np.clip(image.transpose(1, 2, 0), 0, 1))
        for b in boxes:
            ax.add_patch(plt.Rectangle((b.x, b.y), b.w, b.h, fill=False, ec="w", lw=0.8))
        for p in poses:
            ax.scatter(p.keypoints[:, 0], p.keypoints[:, 1], s=18, c="none", edgecolors="k", linewidths=1)
        ax.set_axis_off()
        return _save(fig, path)
