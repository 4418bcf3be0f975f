"""Synthetic keypoint imagery: one coloured Gaussian blob per keypoint on a noise texture."""

from __future__ import annotations

import colorsys
from dataclasses import dataclass

import cv2
import numpy as np

from .kernel import make_rng

BLOB_SIGMA = 2.0
EDGE_MARGIN = 4.0


@dataclass
class SyntheticSample:
    image: np.ndarray  # 3 x H x W, values in [0, 1]
    coords: np.ndarray  # K x 2 (x, y) pixels
    visible: np.ndarray  # K bools

    def copy(self) -> "SyntheticSample":
        return SyntheticSample(self.image.copy(), self.coords.copy(), self.visible.copy())


def keypoint_colors(k_pts: int) -> np.ndarray:
    hues = np.arange(k_pts) / k_pts
    return np.array([colorsys.hsv_to_rgb(h, 0.9, 1.0) for h in hues])


def noise_background(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    base = rng.uniform(0.25, 0.55)
    grain = rng.normal(0.0, 1.0, size=(h, w)).astype(np.float64)
    grain = cv2.GaussianBlur(grain, (0, 0), sigmaX=1.5)
    grain /= grain.std() + 1e-12
    gray = np.clip(base + 0.08 * grain, 0.0, 1.0)
    tint = rng.uniform(-0.03, 0.03, size=3)
    return np.clip(gray[None] + tint[:, None, None], 0.0, 1.0)


def render_blobs(image: np.ndarray, coords: np.ndarray, visible: np.ndarray,
                 colors: np.ndarray, sigma: float = BLOB_SIGMA) -> np.ndarray:
    """Alpha-blend a Gaussian blob of each keypoint's colour into a 3 x H x W image."""
    _, h, w = image.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    out = image.copy()
    for (x, y), vis, color in zip(coords, visible, colors):
        if not vis:
            continue
        alpha = np.exp(-((xs - x) ** 2 + (ys - y) ** 2) / (2 * sigma**2))
        out = out * (1 - alpha) + color[:, None, None] * alpha
    return out


def make_sample(rng: np.random.Generator, width: int = 48, height: int = 64, k_pts: int = 3) -> SyntheticSample:
    coords = np.stack([
        rng.uniform(EDGE_MARGIN, width - EDGE_MARGIN, size=k_pts),
        rng.uniform(EDGE_MARGIN, height - EDGE_MARGIN, size=k_pts),
    ], axis=1)
    visible = np.ones(k_pts, dtype=bool)
    img = render_blobs(noise_background(rng, height, width), coords, visible, keypoint_colors(k_pts))
    return SyntheticSample(img, coords, visible)


def make_dataset(n: int, seed: int, width: int = 48, height: int = 64, k_pts: int = 3) -> list[SyntheticSample]:
    rng = make_rng(seed)
    return [make_sample(rng, width, height, k_pts) for _ in range(n)]


@dataclass
class SyntheticPerson:
    center: np.ndarray  # x, y
    velocity: np.ndarray  # px / frame
    offsets: np.ndarray  # K x 2 keypoint offsets from center


def make_clip(n_frames: int, seed: int, width: int | None = None, height: int = 120, n_people: int = 1,
              k_pts: int = 3, vanish: set[int] | None = None):
    """Frames of people (blob constellations) drifting across a noise background.

    Returns ``(frames, gt)`` where ``frames[i]`` is 3 x H x W and ``gt[i]`` is a
    list of ``K x 2`` keypoint arrays, one per person on screen. Frames listed
    in ``vanish`` are rendered without people. The default width leaves
    80 px per person so neighbours stay apart.
    """
    width = max(160, 80 * (n_people + 1)) if width is None else width
    rng = make_rng(seed)
    vanish = vanish or set()
    colors = keypoint_colors(k_pts)
    people = []
    for i in range(n_people):
        cx = width * (i + 1) / (n_people + 1)
        people.append(SyntheticPerson(
            center=np.array([cx, height / 2.0]),
            velocity=rng.uniform(-0.1, 0.1, size=2),
            offsets=rng.uniform([-12, -18], [12, 18], size=(k_pts, 2)),
        ))
    background = noise_background(rng, height, width)
    frames, gt = [], []
    for t in range(n_frames):
        img = background.copy()
        kps = []
        if t not in vanish:
            for person in people:
                wobble = rng.normal(0.0, 0.3, size=(k_pts, 2))
                pts = person.center + person.velocity * t + person.offsets + wobble
                pts[:, 0] = np.clip(pts[:, 0], 2, width - 3)
                pts[:, 1] = np.clip(pts[:, 1], 2, height - 3)
                img = render_blobs(img, pts, np.ones(k_pts, bool), colors)
                kps.append(pts)
        frames.append(img)
        gt.append(kps)
    return frames, gt
