"""OKS pose NMS and the OneEuro temporal filter."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import PoseResult
from .kernel import ParameterError

DEFAULT_KPT_K = 0.05


class UndefinedSimilarity(ValueError):
    """OKS requested with no keypoint to compare."""


def oks(a: PoseResult, b: PoseResult, area: float, per_kpt_k=DEFAULT_KPT_K, vis_thr: float = 0.0) -> float:
    """Object keypoint similarity, counting keypoints with score above ``vis_thr`` in ``a``."""
    if area <= 0:
        raise ParameterError(f"oks: area must be positive, got {area}")
    ka, kb = a.keypoints, b.keypoints
    if ka.shape[0] != kb.shape[0]:
        raise ValueError(f"oks: keypoint counts differ ({ka.shape[0]} vs {kb.shape[0]})")
    counted = ka[:, 2] > vis_thr
    if not counted.any():
        raise UndefinedSimilarity("oks: no visible keypoints in the reference pose")
    k = np.broadcast_to(np.asarray(per_kpt_k, float), (ka.shape[0],))
    d2 = np.sum((ka[:, :2] - kb[:, :2]) ** 2, axis=1)
    e = np.exp(-d2 / (2.0 * area * k**2))
    return float(e[counted].mean())


def pose_nms(poses: list[PoseResult], threshold: float = 0.7, per_kpt_k=DEFAULT_KPT_K) -> list[PoseResult]:
    """Greedy NMS: highest score first, drop any pose with OKS >= threshold to a kept one.

    OKS uses the mean area of the two poses.
    """
    if not 0 < threshold < 1:
        raise ParameterError(f"nms threshold must be in (0, 1), got {threshold}")
    order = sorted(range(len(poses)), key=lambda i: (-poses[i].score, i))
    kept: list[PoseResult] = []
    for i in order:
        cand = poses[i]
        suppressed = False
        for ref in kept:
            area = 0.5 * (ref.area + cand.area)
            try:
                sim = oks(ref, cand, area, per_kpt_k)
            except UndefinedSimilarity:
                sim = 0.0
            if sim >= threshold:
                suppressed = True
                break
        if not suppressed:
            kept.append(cand)
    return kept


@dataclass(frozen=True)
class OneEuroState:
    min_cutoff: float = 1.0
    beta: float = 0.007
    d_cutoff: float = 1.0
    rate: float = 30.0
    x_prev: float = 0.0
    dx_prev: float = 0.0
    initialized: bool = False

    def __post_init__(self):
        if self.min_cutoff <= 0 or self.d_cutoff <= 0 or self.rate <= 0:
            raise ParameterError("OneEuro cutoffs and rate must be positive")


def smoothing_factor(dt: float, cutoff: float) -> float:
    tau = 1.0 / (2.0 * math.pi * cutoff)
    return 1.0 / (1.0 + tau / dt)


def oneeuro_step(state: OneEuroState, x: float, dt: float | None = None) -> tuple[OneEuroState, float]:
    """Filter one sample. ``dt`` defaults to ``1 / state.rate``."""
    dt = 1.0 / state.rate if dt is None else dt
    if dt <= 0:
        raise ParameterError(f"OneEuro: dt must be positive, got {dt}")
    if not state.initialized:
        return replace(state, x_prev=x, dx_prev=0.0, initialized=True, rate=1.0 / dt), x
    dx = (x - state.x_prev) / dt
    dx_hat = state.dx_prev + smoothing_factor(dt, state.d_cutoff) * (dx - state.dx_prev)
    cutoff = state.min_cutoff + state.beta * abs(dx_hat)
    # written as an increment so a constant stream stays bit-exact
    x_hat = state.x_prev + smoothing_factor(dt, cutoff) * (x - state.x_prev)
    return replace(state, x_prev=x_hat, dx_prev=dx_hat, rate=1.0 / dt), x_hat
