"""Per-stage latency: fixed warm-up count, then timed iterations."""

from __future__ import annotations

import statistics
import time

import numpy as np

from .codec import decode_batch
from .geometry import BBox, PoseResult, crop_affine
from .kernel import softmax_t
from .model import PoseModel
from .pipeline import PipelineConfig
from .postprocess import OneEuroState, oneeuro_step, pose_nms
from .synthetic import make_clip

WARMUP = 50
ITERATIONS = 200
STAGES = ("crop", "forward", "decode", "nms", "filter")


def time_stage(fn, warmup: int = WARMUP, iterations: int = ITERATIONS) -> dict:
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(iterations):
        t0 = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - t0) * 1e3)
    return {
        "warmup": warmup,
        "iterations": len(samples),
        "mean_ms": statistics.fmean(samples),
        "median_ms": statistics.median(samples),
    }


def run_bench(model: PoseModel, pipe: PipelineConfig = PipelineConfig(), seed: int = 0,
              warmup: int = WARMUP, iterations: int = ITERATIONS) -> dict:
    """Time each pipeline stage on one synthetic person (batch size 1)."""
    frames, gt = make_clip(1, seed, k_pts=model.cfg.k_pts)
    image = frames[0]
    pts = gt[0][0]
    lo, hi = pts.min(0), pts.max(0)
    box = BBox(lo[0], lo[1], max(hi[0] - lo[0], 1.0), max(hi[1] - lo[1], 1.0))
    cfg = model.cfg
    crop, _ = crop_affine(image, box, cfg.input_w, cfg.input_h, pipe.padding)
    batch = crop[None]
    lx, ly, _ = model.forward(batch)
    kp = decode_batch(softmax_t(lx, cfg.tau), softmax_t(ly, cfg.tau), cfg.spec)[0]
    rng = np.random.default_rng(seed)
    poses = [PoseResult(kp + np.r_[rng.normal(0, 2, 2), 0.0], float(kp[:, 2].mean()) + 0.01 * i, box)
             for i in range(5)]
    filt = [OneEuroState(pipe.min_cutoff, pipe.beta, pipe.d_cutoff, pipe.rate)] * (2 * cfg.k_pts)
    filt = [oneeuro_step(s, 0.0)[0] for s in filt]
    coords = kp[:, :2].reshape(-1)

    stages = {
        "crop": lambda: crop_affine(image, box, cfg.input_w, cfg.input_h, pipe.padding),
        "forward": lambda: model.forward(batch),
        "decode": lambda: decode_batch(softmax_t(lx, cfg.tau), softmax_t(ly, cfg.tau), cfg.spec),
        "nms": lambda: pose_nms(poses, pipe.nms_threshold, pipe.per_kpt_k),
        "filter": lambda: [oneeuro_step(s, float(c)) for s, c in zip(filt, coords)],
    }
    return {name: time_stage(fn, warmup, iterations) for name, fn in stages.items()}
