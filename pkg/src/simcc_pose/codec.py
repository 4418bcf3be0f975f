"""Coordinate-classification labels: per-axis bins, soft targets, decoding.

A coordinate ``c`` in model-input pixels lives at continuous bin position
``c * split_k``; bin ``i`` stands for the coordinate ``i / split_k``.
Soft targets are a tempered softmax over an unnormalised Gaussian of the
bin distance, with a separate width per axis derived from its bin count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernel import ParameterError, ShapeError, softmax_t

DEFAULT_SPLIT_K = 2.0
DEFAULT_TAU = 0.1


class EncodeError(ValueError):
    """Target coordinate outside the encodable range of its axis."""


@dataclass(frozen=True)
class BinSpec:
    input_w: int
    input_h: int
    split_k: float = DEFAULT_SPLIT_K

    @property
    def bins_x(self) -> int:
        return int(round(self.input_w * self.split_k))

    @property
    def bins_y(self) -> int:
        return int(round(self.input_h * self.split_k))

    def bins(self, axis: str) -> int:
        if axis == "x":
            return self.bins_x
        if axis == "y":
            return self.bins_y
        raise ParameterError(f"axis must be 'x' or 'y', got {axis!r}")

    def extent(self, axis: str) -> float:
        return float(self.input_w if axis == "x" else self.input_h)


def bin_spec_from_input(input_w: float, input_h: float, split_k: float = DEFAULT_SPLIT_K) -> BinSpec:
    if input_w <= 0 or input_h <= 0 or split_k <= 0:
        raise ParameterError(
            f"input size and split factor must be positive, got {input_w}x{input_h}, k={split_k}"
        )
    spec = BinSpec(input_w, input_h, split_k)
    if spec.bins_x < 2 or spec.bins_y < 2:
        raise ParameterError(f"need at least 2 bins per axis, got {spec.bins_x}x{spec.bins_y}")
    return spec


def sigma_for_bins(bins: int) -> float:
    """Gaussian width in bin units: sqrt(bins / 16)."""
    if bins < 2:
        raise ParameterError(f"bins must be >= 2, got {bins}")
    return math.sqrt(bins / 16.0)


def gaussian_metric(r_t: float, n_bins: int, sigma: float) -> np.ndarray:
    idx = np.arange(n_bins, dtype=np.float64)
    return np.exp(-((r_t - idx) ** 2) / (2.0 * sigma**2))


def encode_soft_label(target: float, spec: BinSpec, axis: str, tau: float = DEFAULT_TAU,
                      sigma: float | None = None) -> np.ndarray:
    """Soft label over the bins of one axis for a pixel coordinate.

    ``sigma`` (bin units) defaults to :func:`sigma_for_bins` of the axis.
    """
    if not tau > 0:
        raise ParameterError(f"tau must be positive, got {tau}")
    extent = spec.extent(axis)
    if not (0.0 <= target < extent):
        raise EncodeError(f"{axis}-coordinate {target} outside [0, {extent})")
    n = spec.bins(axis)
    phi = gaussian_metric(target * spec.split_k, n, sigma_for_bins(n) if sigma is None else sigma)
    return softmax_t(phi, tau)


def encode_hard_label(target: float, spec: BinSpec, axis: str) -> np.ndarray:
    """One-hot label at the nearest bin; the ablation baseline."""
    extent = spec.extent(axis)
    if not (0.0 <= target < extent):
        raise EncodeError(f"{axis}-coordinate {target} outside [0, {extent})")
    n = spec.bins(axis)
    out = np.zeros(n)
    # ceil(r - 0.5): nearest bin, half-way ties to the lower one like argmax
    out[min(int(np.ceil(target * spec.split_k - 0.5)), n - 1)] = 1.0
    return out


def encode_keypoints(
    coords: np.ndarray,
    visible: np.ndarray,
    spec: BinSpec,
    tau: float = DEFAULT_TAU,
    soft: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Labels for K keypoints.

    Returns ``(label_x[K, bins_x], label_y[K, bins_y], weight[K])``. Invisible
    or out-of-frame keypoints get weight 0 and a uniform placeholder label.
    """
    k = len(coords)
    lx = np.full((k, spec.bins_x), 1.0 / spec.bins_x)
    ly = np.full((k, spec.bins_y), 1.0 / spec.bins_y)
    weight = np.zeros(k)
    for i, ((x, y), vis) in enumerate(zip(coords, visible)):
        if not vis or not (0 <= x < spec.input_w and 0 <= y < spec.input_h):
            continue
        if soft:
            lx[i] = encode_soft_label(x, spec, "x", tau)
            ly[i] = encode_soft_label(y, spec, "y", tau)
        else:
            lx[i] = encode_hard_label(x, spec, "x")
            ly[i] = encode_hard_label(y, spec, "y")
        weight[i] = 1.0
    return lx, ly, weight


def decode_coordinates(label_x: np.ndarray, label_y: np.ndarray, spec: BinSpec) -> tuple[float, float, float]:
    """Argmax decode of one keypoint. Ties go to the lowest bin index."""
    if label_x.shape != (spec.bins_x,) or label_y.shape != (spec.bins_y,):
        raise ShapeError(
            f"decode: expected lengths ({spec.bins_x}, {spec.bins_y}), "
            f"got {label_x.shape} and {label_y.shape}"
        )
    ix = int(np.argmax(label_x))  # np.argmax returns the first maximum
    iy = int(np.argmax(label_y))
    score = 0.5 * (float(label_x[ix]) + float(label_y[iy]))
    return ix / spec.split_k, iy / spec.split_k, score


def decode_batch(prob_x: np.ndarray, prob_y: np.ndarray, spec: BinSpec) -> np.ndarray:
    """Vectorised decode of ``[..., bins]`` distributions -> ``[..., 3]`` (x, y, score)."""
    if prob_x.shape[-1] != spec.bins_x or prob_y.shape[-1] != spec.bins_y:
        raise ShapeError(
            f"decode: expected lengths ({spec.bins_x}, {spec.bins_y}), "
            f"got {prob_x.shape[-1]} and {prob_y.shape[-1]}"
        )
    ix = prob_x.argmax(axis=-1)
    iy = prob_y.argmax(axis=-1)
    px = np.take_along_axis(prob_x, ix[..., None], axis=-1)[..., 0]
    py = np.take_along_axis(prob_y, iy[..., None], axis=-1)[..., 0]
    return np.stack([ix / spec.split_k, iy / spec.split_k, 0.5 * (px + py)], axis=-1)
