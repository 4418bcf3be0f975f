import math
from types import SimpleNamespace

import numpy as np
import pytest

from simcc_pose.geometry import BBox, apply_affine, crop_transform
from simcc_pose.pipeline import (
    BlobDetector,
    GroundTruthDetector,
    PipelineConfig,
    PipelineState,
    estimate_poses,
    pose_record,
    process_frame,
)
from simcc_pose.synthetic import make_clip

FRAME = np.zeros((3, 120, 160))


class StubModel:
    """Returns fixed keypoints in crop space; ``low`` switches to unconfident output."""

    def __init__(self, kp=None, k=3):
        self.cfg = SimpleNamespace(input_w=48, input_h=64)
        self.kp = np.array([[12.0, 16.0, 0.9], [36.0, 20.0, 0.8], [24.0, 48.0, 0.95]]) if kp is None else kp
        self.low = False

    def predict(self, images):
        out = np.repeat(self.kp[None], len(images), axis=0).copy()
        if self.low:
            out[..., 2] = 0.05
        return out


class CountingDetector:
    def __init__(self, boxes):
        self.boxes = boxes
        self.calls = []

    def __call__(self, image):
        self.calls.append(image)
        return list(self.boxes)


def run(n_frames, k, lose_at=None, boxes=(BBox(50, 30, 40, 60),)):
    state = PipelineState(PipelineConfig(detect_interval=k))
    model = StubModel()
    det = CountingDetector(boxes)
    for i in range(n_frames):
        # unconfident output on frame i - 1 makes the track unusable on frame i
        model.low = lose_at is not None and i == lose_at - 1
        process_frame(state, FRAME, det, model)
    return state, det


def test_every_frame_with_k1():
    state, det = run(12, 1)
    assert len(det.calls) == 12 == state.detector_calls


@pytest.mark.parametrize("n,k", [(100, 5), (10, 5), (17, 4), (9, 3)])
def test_ceil_n_over_k(n, k):
    state, det = run(n, k)
    assert state.detector_calls == len(det.calls) == math.ceil(n / k)


def test_track_loss_costs_exactly_one_extra_detection():
    stable, _ = run(100, 5)
    lost, _ = run(100, 5, lose_at=42)
    assert stable.detector_calls == 20
    assert lost.detector_calls == 21


def test_track_loss_detects_on_next_frame():
    state = PipelineState(PipelineConfig(detect_interval=5))
    model, det = StubModel(), CountingDetector([BBox(50, 30, 40, 60)])
    detected_on = []
    for i in range(10):
        model.low = i == 1
        before = state.detector_calls
        _, poses = process_frame(state, FRAME, det, model)
        if state.detector_calls > before:
            detected_on.append(i)
        if i == 2:
            assert poses == [] and state.force_detect
    assert detected_on == [0, 3, 5]


def test_empty_detection():
    state = PipelineState()
    _, poses = process_frame(state, FRAME, CountingDetector([]), StubModel())
    assert poses == [] and state.frame_index == 1
    _, poses = process_frame(state, FRAME, CountingDetector([]), StubModel())
    assert poses == [] and state.frame_index == 2


def test_first_frame_keypoints_map_to_source():
    box = BBox(50, 30, 40, 60)
    state = PipelineState()
    _, poses = process_frame(state, FRAME, CountingDetector([box]), StubModel())
    m = crop_transform(box, 48, 64, 1.25)
    # OneEuro passes the first sample through unchanged
    np.testing.assert_allclose(apply_affine(m, poses[0].keypoints[:, :2]), StubModel().kp[:, :2], atol=1e-9)
    assert poses[0].score == pytest.approx(np.mean([0.9, 0.8, 0.95]))


def test_coordinate_round_trip(rng):
    cfg = PipelineConfig()
    for _ in range(20):
        box = BBox(*rng.uniform(0, 80, 2), *rng.uniform(10, 70, 2))
        model = StubModel(np.column_stack([rng.uniform(0, 48, 3), rng.uniform(0, 64, 3), np.ones(3)]))
        pose = estimate_poses(FRAME, [box], model, cfg)[0]
        m = crop_transform(box, 48, 64, cfg.padding)
        np.testing.assert_allclose(apply_affine(m, pose.keypoints[:, :2]), model.kp[:, :2], atol=1e-6)


def test_duplicate_boxes_are_merged():
    box = BBox(50, 30, 40, 60)
    _, poses = process_frame(PipelineState(), FRAME, CountingDetector([box, box]), StubModel())
    assert len(poses) == 1


def test_tracks_smooth_between_detections():
    state = PipelineState(PipelineConfig(detect_interval=5))
    model = StubModel()
    det = CountingDetector([BBox(50, 30, 40, 60)])
    outs = []
    for i in range(4):
        _, poses = process_frame(state, FRAME, det, model)
        outs.append(poses)
    assert all(len(p) == 1 for p in outs)
    assert state.detector_calls == 1


def test_ground_truth_detector_replays():
    boxes = [[BBox(0, 0, 1, 1)], [BBox(1, 1, 2, 2)]]
    det = GroundTruthDetector(boxes)
    assert det(FRAME) == boxes[0] and det(FRAME) == boxes[1] and det(FRAME) == boxes[1]


def test_blob_detector_covers_people():
    frames, gt = make_clip(3, seed=4, n_people=2)
    det = BlobDetector()
    for frame, people in zip(frames, gt):
        boxes = det(frame)
        assert len(boxes) == 2
        for pts in people:
            assert any(b.x - 3 <= pts[:, 0].min() and pts[:, 0].max() <= b.x + b.w + 3
                       and b.y - 3 <= pts[:, 1].min() and pts[:, 1].max() <= b.y + b.h + 3 for b in boxes)


def test_blob_detector_on_blank_frame():
    assert BlobDetector()(np.full((3, 40, 40), 0.5)) == []


def test_pose_record_layout():
    _, poses = process_frame(PipelineState(), FRAME, CountingDetector([BBox(50, 30, 40, 60)]), StubModel())
    rec = pose_record(7, poses)
    assert rec["frame_index"] == 7
    assert len(rec["poses"][0]["keypoints"]) == 9
