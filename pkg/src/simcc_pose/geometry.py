"""Boxes and the affine crop between source images and model input."""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

MIN_BOX_SIDE = 32.0


class DegenerateBoxError(ValueError):
    pass


class TrackLost(Exception):
    """No keypoint was confident enough to derive a box; re-detect."""


@dataclass(frozen=True)
class BBox:
    x: float
    y: float
    w: float
    h: float
    score: float = 1.0

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0) or not np.isfinite([self.x, self.y, self.w, self.h]).all():
            raise DegenerateBoxError(f"box needs positive finite size, got {self.w}x{self.h}")

    @property
    def center(self) -> tuple[float, float]:
        return self.x + self.w / 2.0, self.y + self.h / 2.0

    @property
    def area(self) -> float:
        return self.w * self.h

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float, score: float = 1.0) -> "BBox":
        return cls(cx - w / 2.0, cy - h / 2.0, w, h, score)


@dataclass(frozen=True)
class PoseResult:
    keypoints: np.ndarray  # K x 3: x, y, score in source pixels
    score: float
    bbox: BBox | None = None

    @property
    def area(self) -> float:
        if self.bbox is not None:
            return self.bbox.area
        span = self.keypoints[:, :2].max(0) - self.keypoints[:, :2].min(0)
        return float(max(span[0] * span[1], 1.0))


def expand_box(box: BBox, padding: float) -> BBox:
    cx, cy = box.center
    return BBox.from_center(cx, cy, box.w * padding, box.h * padding, box.score)


def fit_aspect(box: BBox, out_w: int, out_h: int) -> BBox:
    """Grow the shorter side so the box matches ``out_w / out_h``; centre kept."""
    cx, cy = box.center
    w, h = box.w, box.h
    aspect = out_w / out_h
    if w > h * aspect:
        h = w / aspect
    else:
        w = h * aspect
    return BBox.from_center(cx, cy, w, h, box.score)


def crop_transform(box: BBox, out_w: int, out_h: int, padding: float = 1.25) -> np.ndarray:
    """2 x 3 matrix taking source pixels into the ``out_w x out_h`` crop."""
    if padding < 1:
        raise ValueError(f"padding must be >= 1, got {padding}")
    region = fit_aspect(expand_box(box, padding), out_w, out_h)
    s = out_w / region.w
    cx, cy = region.center
    return np.array([[s, 0.0, out_w / 2.0 - s * cx],
                     [0.0, s, out_h / 2.0 - s * cy]])


def invert_affine(m: np.ndarray) -> np.ndarray:
    a = m[:, :2]
    det = np.linalg.det(a)
    if abs(det) < 1e-12:
        raise ValueError("affine transform is not invertible")
    inv = np.linalg.inv(a)
    return np.hstack([inv, -inv @ m[:, 2:3]])


def apply_affine(m: np.ndarray, pts: np.ndarray) -> np.ndarray:
    return pts @ m[:, :2].T + m[:, 2]


def crop_affine(image: np.ndarray, box: BBox, out_w: int, out_h: int, padding: float = 1.25):
    """Warp the padded, aspect-fitted box of a ``3 x H x W`` image to ``3 x out_h x out_w``.

    Returns ``(crop, transform)`` where ``transform`` maps source to crop pixels.
    """
    m = crop_transform(box, out_w, out_h, padding)
    hwc = np.ascontiguousarray(image.transpose(1, 2, 0))
    crop = cv2.warpAffine(hwc, m, (out_w, out_h), flags=cv2.INTER_LINEAR,
                          borderMode=cv2.BORDER_CONSTANT, borderValue=(0, 0, 0))
    if crop.ndim == 2:
        crop = crop[:, :, None]
    return np.ascontiguousarray(crop.transpose(2, 0, 1)), m


def bbox_from_pose(pose: PoseResult, margin: float = 1.25, score_thr: float = 0.3,
                   min_side: float = MIN_BOX_SIDE) -> BBox:
    """Box around the confident keypoints, scaled by ``margin`` about its centre."""
    kp = pose.keypoints
    good = kp[:, 2] > score_thr
    if not good.any():
        raise TrackLost("no keypoint above the confidence threshold")
    pts = kp[good, :2]
    lo, hi = pts.min(0), pts.max(0)
    cx, cy = (lo + hi) / 2.0
    w = max((hi[0] - lo[0]) * margin, min_side)
    h = max((hi[1] - lo[1]) * margin, min_side)
    return BBox.from_center(cx, cy, w, h, pose.score)
