"""Strong/weak geometric augmentation with Cutout for keypoint samples."""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .kernel import ParameterError
from .synthetic import SyntheticSample


@dataclass(frozen=True)
class AugmentationConfig:
    scale_range: tuple[float, float] = (0.6, 1.4)
    rotation_deg: float = 80.0
    cutout_prob: float = 1.0
    shift_enabled: bool = True
    shift_factor: float = 0.16
    cutout_side: tuple[float, float] = (0.1, 0.3)

    def __post_init__(self):
        if not 0.0 <= self.cutout_prob <= 1.0:
            raise ParameterError(f"cutout_prob must be in [0, 1], got {self.cutout_prob}")
        if not self.scale_range[0] < self.scale_range[1]:
            raise ParameterError(f"scale_range must be increasing, got {self.scale_range}")


STRONG = AugmentationConfig()
WEAK = AugmentationConfig(rotation_deg=20.0, cutout_prob=0.5, shift_enabled=False)


@dataclass(frozen=True)
class AugmentDraw:
    scale: float = 1.0
    rotation_deg: float = 0.0
    shift: tuple[float, float] = (0.0, 0.0)  # pixels
    cutout: tuple[int, int, int, int] | None = None  # x0, y0, w, h

    @property
    def is_identity(self) -> bool:
        return (self.scale == 1.0 and self.rotation_deg == 0.0
                and self.shift == (0.0, 0.0) and self.cutout is None)


def draw_params(cfg: AugmentationConfig, rng: np.random.Generator, width: int, height: int) -> AugmentDraw:
    scale = rng.uniform(*cfg.scale_range)
    rot = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg)
    shift = (0.0, 0.0)
    if cfg.shift_enabled:
        sx, sy = rng.uniform(-cfg.shift_factor, cfg.shift_factor, size=2)
        shift = (float(sx * width), float(sy * height))
    cutout = None
    if rng.uniform() < cfg.cutout_prob:
        cw = int(round(rng.uniform(*cfg.cutout_side) * width))
        ch = int(round(rng.uniform(*cfg.cutout_side) * height))
        x0 = int(rng.integers(0, width - cw + 1))
        y0 = int(rng.integers(0, height - ch + 1))
        cutout = (x0, y0, cw, ch)
    return AugmentDraw(float(scale), float(rot), shift, cutout)


def augment_matrix(draw: AugmentDraw, width: int, height: int) -> np.ndarray:
    """2 x 3 map: scale and rotate about the image centre, then shift."""
    cx, cy = width / 2.0, height / 2.0
    m = cv2.getRotationMatrix2D((cx, cy), draw.rotation_deg, draw.scale)
    m[:, 2] += draw.shift
    return m


def apply_draw(sample: SyntheticSample, draw: AugmentDraw) -> SyntheticSample:
    if draw.is_identity:
        return sample.copy()
    _, h, w = sample.image.shape
    m = augment_matrix(draw, w, h)
    hwc = np.ascontiguousarray(sample.image.transpose(1, 2, 0))
    warped = cv2.warpAffine(hwc, m, (w, h), flags=cv2.INTER_LINEAR,
                            borderMode=cv2.BORDER_CONSTANT, borderValue=(0, 0, 0))
    image = np.ascontiguousarray(warped.transpose(2, 0, 1))
    if draw.cutout is not None:
        x0, y0, cw, ch = draw.cutout
        image[:, y0:y0 + ch, x0:x0 + cw] = 0.0
    coords = sample.coords @ m[:, :2].T + m[:, 2]
    inside = (coords[:, 0] >= 0) & (coords[:, 0] < w) & (coords[:, 1] >= 0) & (coords[:, 1] < h)
    return SyntheticSample(image, coords, sample.visible & inside)


def augment(sample: SyntheticSample, cfg: AugmentationConfig, rng: np.random.Generator) -> SyntheticSample:
    _, h, w = sample.image.shape
    return apply_draw(sample, draw_params(cfg, rng, w, h))
