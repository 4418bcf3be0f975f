"""Top-down video pipeline with skip-frame detection, pose NMS and OneEuro smoothing.

Detection runs on frames whose index is a multiple of ``detect_interval``
(and on the frame after a track was lost). In between, each track's box
is derived from its previous pose.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np
from scipy import ndimage
from scipy.cluster.hierarchy import fcluster, linkage

from .geometry import BBox, PoseResult, TrackLost, apply_affine, bbox_from_pose, crop_affine, invert_affine
from .postprocess import OneEuroState, oneeuro_step, pose_nms

Detector = Callable[[np.ndarray], list[BBox]]


class KeypointModel(Protocol):
    def predict(self, images: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class PipelineConfig:
    detect_interval: int = 5
    padding: float = 1.25
    box_margin: float = 1.25
    keypoint_thr: float = 0.3
    nms_threshold: float = 0.7
    per_kpt_k: float = 0.05
    min_cutoff: float = 1.0
    beta: float = 0.007
    d_cutoff: float = 1.0
    rate: float = 30.0


@dataclass
class Track:
    pose: PoseResult
    filters: list[tuple[OneEuroState, OneEuroState]]


@dataclass
class PipelineState:
    config: PipelineConfig = field(default_factory=PipelineConfig)
    frame_index: int = 0
    tracks: list[Track] = field(default_factory=list)
    force_detect: bool = False
    detector_calls: int = 0
    last_timestamp: float | None = None

    @property
    def detect_interval(self) -> int:
        return self.config.detect_interval

    @property
    def cached_boxes(self) -> list[BBox]:
        return [t.pose.bbox for t in self.tracks if t.pose.bbox is not None]

    def is_detection_frame(self) -> bool:
        return self.force_detect or self.frame_index % self.config.detect_interval == 0


def _fresh_filters(k: int, cfg: PipelineConfig) -> list[tuple[OneEuroState, OneEuroState]]:
    s = OneEuroState(cfg.min_cutoff, cfg.beta, cfg.d_cutoff, cfg.rate)
    return [(s, s) for _ in range(k)]


def _match_tracks(boxes: list[BBox], tracks: list[Track]) -> list[Track | None]:
    """Greedy nearest-centre association of new boxes to previous tracks."""
    out: list[Track | None] = [None] * len(boxes)
    pairs = []
    for i, b in enumerate(boxes):
        for j, t in enumerate(tracks):
            if t.pose.bbox is None:
                continue
            d = np.hypot(b.center[0] - t.pose.bbox.center[0], b.center[1] - t.pose.bbox.center[1])
            if d <= max(b.w, b.h):
                pairs.append((d, i, j))
    used_b, used_t = set(), set()
    for _, i, j in sorted(pairs):
        if i not in used_b and j not in used_t:
            out[i] = tracks[j]
            used_b.add(i)
            used_t.add(j)
    return out


def estimate_poses(image: np.ndarray, boxes: list[BBox], model, cfg: PipelineConfig) -> list[PoseResult]:
    """Crop each box, run the model, and map keypoints back to source pixels."""
    if not boxes:
        return []
    in_w, in_h = model.cfg.input_w, model.cfg.input_h
    crops, transforms = zip(*(crop_affine(image, b, in_w, in_h, cfg.padding) for b in boxes))
    preds = model.predict(np.stack(crops))
    poses = []
    for box, m, kp in zip(boxes, transforms, preds):
        src = kp.copy()
        src[:, :2] = apply_affine(invert_affine(m), kp[:, :2])
        poses.append(PoseResult(src, float(kp[:, 2].mean()), box))
    return poses


def process_frame(state: PipelineState, image: np.ndarray, detector: Detector, model,
                  timestamp: float | None = None) -> tuple[PipelineState, list[PoseResult]]:
    """Advance the pipeline by one frame; ``state`` is updated in place and returned."""
    cfg = state.config
    if timestamp is not None and state.last_timestamp is not None and timestamp > state.last_timestamp:
        dt = timestamp - state.last_timestamp
    else:
        dt = 1.0 / cfg.rate
    state.last_timestamp = timestamp

    if state.is_detection_frame():
        boxes = list(detector(image))
        state.detector_calls += 1
        state.force_detect = False
        prior = _match_tracks(boxes, state.tracks)
    else:
        boxes, prior = [], []
        for track in state.tracks:
            try:
                boxes.append(bbox_from_pose(track.pose, cfg.box_margin, cfg.keypoint_thr))
                prior.append(track)
            except TrackLost:
                state.force_detect = True

    poses = estimate_poses(image, boxes, model, cfg)
    by_id = {id(p): t for p, t in zip(poses, prior)}
    kept = pose_nms(poses, cfg.nms_threshold, cfg.per_kpt_k)

    results, tracks = [], []
    for pose in kept:
        prev = by_id.get(id(pose))
        filters = prev.filters if prev is not None else _fresh_filters(len(pose.keypoints), cfg)
        smoothed = pose.keypoints.copy()
        new_filters = []
        for i, (fx, fy) in enumerate(filters):
            fx, smoothed[i, 0] = oneeuro_step(fx, float(pose.keypoints[i, 0]), dt)
            fy, smoothed[i, 1] = oneeuro_step(fy, float(pose.keypoints[i, 1]), dt)
            new_filters.append((fx, fy))
        out = PoseResult(smoothed, pose.score, pose.bbox)
        results.append(out)
        tracks.append(Track(out, new_filters))
    state.tracks = tracks
    state.frame_index += 1
    return state, results


class GroundTruthDetector:
    """Replays known boxes; ``boxes[i]`` is used for the i-th call."""

    def __init__(self, boxes: list[list[BBox]]):
        self.boxes = boxes
        self.calls = 0

    def __call__(self, image: np.ndarray) -> list[BBox]:
        out = self.boxes[min(self.calls, len(self.boxes) - 1)] if self.boxes else []
        self.calls += 1
        return out


class BlobDetector:
    """Finds saturated blobs and groups nearby ones into one box per person.

    Blobs are grouped by single-linkage clustering of their centroids, so a
    person is one box as long as each of its blobs lies within
    ``link_px`` of another blob of the same person.
    """

    def __init__(self, saturation_thr: float = 0.25, link_px: float = 32.0, min_pixels: int = 6):
        self.saturation_thr = saturation_thr
        self.link_px = link_px
        self.min_pixels = min_pixels

    def __call__(self, image: np.ndarray) -> list[BBox]:
        sat = image.max(axis=0) - image.min(axis=0)
        labels, n = ndimage.label(sat > self.saturation_thr)
        if n == 0:
            return []
        sizes = ndimage.sum_labels(np.ones_like(sat), labels, index=np.arange(1, n + 1))
        keep = [i + 1 for i in range(n) if sizes[i] >= self.min_pixels]
        if not keep:
            return []
        slices = ndimage.find_objects(labels)
        centroids = np.array(ndimage.center_of_mass(np.ones_like(sat), labels, keep))
        groups = (fcluster(linkage(centroids, "single"), self.link_px, criterion="distance")
                  if len(keep) > 1 else np.ones(1, dtype=int))
        boxes = []
        for g in np.unique(groups):
            members = [slices[keep[i] - 1] for i in np.flatnonzero(groups == g)]
            y0 = min(sl[0].start for sl in members)
            y1 = max(sl[0].stop for sl in members)
            x0 = min(sl[1].start for sl in members)
            x1 = max(sl[1].stop for sl in members)
            boxes.append(BBox(float(x0), float(y0), float(x1 - x0), float(y1 - y0), 1.0))
        return boxes


def pose_record(frame_index: int, poses: list[PoseResult]) -> dict:
    """One line of the pose stream, COCO keypoint-result layout per instance."""
    return {
        "frame_index": frame_index,
        "poses": [{"keypoints": [round(float(v), 4) for v in p.keypoints.reshape(-1)],
                   "score": round(float(p.score), 6)} for p in poses],
    }
