"""Acceptance suite: one test per criterion, each at its stated tolerance.

Criterion 1 only declares that full-dataset numbers are out of reach at desk
scale, so nothing is run for it. Each remaining criterion records a PASS/FAIL
line that is printed in the terminal summary.
"""

import json
import math
import time

import numpy as np
import pytest

from simcc_pose.bench import ITERATIONS, STAGES, WARMUP, run_bench
from simcc_pose.codec import bin_spec_from_input, decode_coordinates, encode_soft_label, sigma_for_bins
from simcc_pose.head import gau_backward, gau_forward, head_backward, head_forward, init_gau, init_head
from simcc_pose.kernel import conv2d, conv2d_backward
from simcc_pose.loss import kl_loss
from simcc_pose.model import ModelConfig, PoseModel, init_model
from simcc_pose.pipeline import BlobDetector, PipelineConfig, PipelineState, process_frame
from simcc_pose.postprocess import OneEuroState, oneeuro_step, pose_nms
from simcc_pose.evaluation import eval_ap
from simcc_pose.synthetic import make_clip, make_dataset
from simcc_pose.trainer import TrainConfig, evaluate_pck, train

from conftest import check_grads, record_criterion
from test_evaluation import exhaustive_ap, make_scene
from test_head import SMALL_SPEC, randomise
from test_postprocess import brute_force_nms, random_scene

HOLDOUT_SEED = 1_000_003


# ---------------------------------------------------------------- criterion 2

def _grad_suite(seed: int) -> None:
    g = np.random.default_rng(seed)

    x, w, b = g.normal(size=(2, 2, 6, 5)), g.normal(size=(3, 2, 3, 3)), g.normal(size=3)
    up = g.normal(size=conv2d(x, w, b, 2).shape)
    gx, gw, gb = conv2d_backward(x, w, up, 2)
    check_grads(lambda: float(np.sum(conv2d(x, w, b, 2) * up)), {"x": x, "w": w, "b": b},
                {"x": gx, "w": gw, "b": gb}, per_param=10, rng=g)

    p = randomise(init_gau(8, 4, seed=seed), g)
    t = g.normal(size=(3, 8))
    up = g.normal(size=(3, 8))
    _, cache = gau_forward(t, p)
    grads, gt = gau_backward(cache, up, p)
    f = lambda: float(np.sum(gau_forward(t, p)[0] * up))  # noqa: E731
    check_grads(f, p, grads, per_param=6, rng=g)
    check_grads(f, {"t": t}, {"t": gt}, per_param=10, rng=g)

    hp = randomise(init_head(SMALL_SPEC, 3, (4, 3, 2), seed=seed, hidden=8, attn_dim=4), g, 0.3)
    feats = g.normal(size=(4, 3, 2))
    wx, wy = g.normal(size=(3, 10)), g.normal(size=(3, 10))
    _, _, cache = head_forward(feats, hp, SMALL_SPEC)
    grads, _ = head_backward(cache, wx, wy, hp)

    def head_loss():
        lx, ly, _ = head_forward(feats, hp, SMALL_SPEC)
        return float(np.sum(lx * wx) + np.sum(ly * wy))

    classifiers = [k for k in hp if k.startswith("cls_") or k.startswith("fc_") or k.startswith("conv")]
    check_grads(head_loss, {k: hp[k] for k in classifiers}, grads, per_param=8, rng=g)

    lx, ly = g.normal(size=(3, 10)), g.normal(size=(3, 10))
    tx, ty = g.dirichlet(np.ones(10), size=3), g.dirichlet(np.ones(10), size=3)
    _, gx, gy = kl_loss(lx, ly, tx, ty)
    check_grads(lambda: kl_loss(lx, ly, tx, ty)[0], {"x": lx, "y": ly}, {"x": gx, "y": gy}, per_param=15, rng=g)


def test_criterion_2_gradient_suite():
    start = time.perf_counter()
    failures = []
    for seed in range(5):
        try:
            _grad_suite(seed)
        except AssertionError as exc:
            failures.append((seed, str(exc)[:200]))
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 60
    record_criterion(2, ok, f"conv/GAU/classifier/KL gradients, 5 seeds, {elapsed:.1f}s, failures={failures}")
    assert ok


# ---------------------------------------------------------------- criterion 3

def test_criterion_3_codec():
    spec = bin_spec_from_input(192, 256, 2)
    rng = np.random.default_rng(2024)
    hi = (spec.bins_x - 1) / spec.split_k, (spec.bins_y - 1) / spec.split_k
    xs, ys = rng.uniform(0, hi[0], 1000), rng.uniform(0, hi[1], 1000)
    worst_sum = worst_rt = 0.0
    argmax_ok = True
    for x, y in zip(xs, ys):
        lx, ly = encode_soft_label(x, spec, "x"), encode_soft_label(y, spec, "y")
        worst_sum = max(worst_sum, abs(lx.sum() - 1), abs(ly.sum() - 1))
        true_x = min(math.ceil(x * spec.split_k - 0.5), spec.bins_x - 1)
        true_y = min(math.ceil(y * spec.split_k - 0.5), spec.bins_y - 1)
        argmax_ok &= bool(np.argmax(lx) == true_x and np.argmax(ly) == true_y)
        dx, dy, _ = decode_coordinates(lx, ly, spec)
        worst_rt = max(worst_rt, abs(dx - x), abs(dy - y))
    taus_ok = all(
        len({int(np.argmax(encode_soft_label(x, spec, "x", t))) for t in (0.05, 0.1, 1.0)}) == 1 for x in xs[:200]
    )
    checks = {"sum": bool(worst_sum <= 1e-9), "argmax": argmax_ok, "round_trip": bool(worst_rt <= 0.25),
              "tau": taus_ok}
    ok = all(checks.values())
    record_criterion(3, ok, f"{checks}, max |sum-1|={worst_sum:.1e}, max round-trip error={worst_rt:.4f}px")
    assert ok


# ---------------------------------------------------------------- criterion 4

def test_criterion_4_sigma():
    s384, s512 = sigma_for_bins(384), sigma_for_bins(512)
    ok = abs(s384 - 4.89898) <= 1e-4 and abs(s512 - 5.65685) <= 1e-4
    record_criterion(4, ok, f"sigma(384)={s384:.6f}, sigma(512)={s512:.6f}")
    assert ok


# ---------------------------------------------------------------- criterion 5

def test_criterion_5_oracles():
    nms_mismatch = []
    for seed in range(100):
        poses = random_scene(seed)
        got = [id(p) for p in pose_nms(poses, 0.7)]
        if got != [id(poses[i]) for i in brute_force_nms(poses, 0.7)]:
            nms_mismatch.append(seed)
    ap_err = 0.0
    for seed in range(20):
        preds, gts = make_scene(seed)
        ap_err = max(ap_err, abs(eval_ap(preds, gts).ap - exhaustive_ap(preds, gts)))
    ok = not nms_mismatch and ap_err <= 1e-9
    record_criterion(5, ok, f"NMS mismatches on 100 scenes: {nms_mismatch}, max AP deviation on 20 scenes: {ap_err:.1e}")
    assert ok


# ---------------------------------------------------------------- criterion 8/9 fixture

@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """The desk-scale run: 500 samples, 60 strong + 10 weak epochs, held-out 100."""
    model_cfg = ModelConfig()
    data = make_dataset(500, 0, model_cfg.input_w, model_cfg.input_h, model_cfg.k_pts)
    val = make_dataset(100, HOLDOUT_SEED, model_cfg.input_w, model_cfg.input_h, model_cfg.k_pts)
    cfg = TrainConfig.desk()
    start = time.perf_counter()
    result = train(cfg, model_cfg, data, val)
    elapsed = time.perf_counter() - start
    out = tmp_path_factory.mktemp("acceptance")
    return {"cfg": cfg, "model_cfg": model_cfg, "data": data, "val": val, "result": result,
            "seconds": elapsed, "out": out}


# ---------------------------------------------------------------- criterion 6

@pytest.mark.slow
def test_criterion_6_scheduling(trained):
    model = PoseModel(trained["model_cfg"], trained["result"].ema_params)

    def count(vanish):
        frames, _ = make_clip(100, seed=0, vanish=vanish)
        state = PipelineState(PipelineConfig(detect_interval=5))
        for i, frame in enumerate(frames):
            process_frame(state, frame, BlobDetector(), model, timestamp=i / 30)
        return state.detector_calls

    # the person is missing from frame 41, so the track is lost on frame 42
    stable, lost = count(None), count({41})
    ok = stable == 20 and lost == stable + 1
    record_criterion(6, ok, f"100 frames, K=5: {stable} detections; with track loss at frame 42: {lost}")
    assert ok


# ---------------------------------------------------------------- criterion 7

def test_criterion_7_oneeuro():
    state, outs = OneEuroState(), []
    for _ in range(50):
        state, y = oneeuro_step(state, 12.5)
        outs.append(y)
    exact = all(y == 12.5 for y in outs)
    xs = 100.0 + np.random.default_rng(7).normal(0, 2.0, 200)
    state, filt = OneEuroState(), []
    for x in xs:
        state, y = oneeuro_step(state, float(x))
        filt.append(y)
    ratio = float(np.var(filt) / np.var(xs))
    ok = exact and ratio < 0.5
    record_criterion(7, ok, f"constant reproduced exactly: {exact}, variance ratio {ratio:.3f}")
    assert ok


# ---------------------------------------------------------------- criterion 8

@pytest.mark.slow
def test_criterion_8_end_to_end(trained):
    res = trained["result"]
    cfg_m = trained["model_cfg"]
    raw = evaluate_pck(PoseModel(cfg_m, res.params), trained["val"], 0.1)
    ema = evaluate_pck(PoseModel(cfg_m, res.ema_params), trained["val"], 0.1)
    secs = trained["seconds"]
    ok = raw >= 0.95 and ema >= raw - 0.02 and secs < 600
    record_criterion(8, ok, f"held-out PCK@0.1 raw={raw:.3f} EMA={ema:.3f}, training {secs:.0f}s")
    assert ok


# ---------------------------------------------------------------- criterion 9

@pytest.mark.slow
def test_criterion_9_soft_vs_hard(trained):
    """Reported, not gated: desk-scale variance can hide the gap either way."""
    cfg_m = trained["model_cfg"]
    hard_cfg = TrainConfig.desk(soft_labels=False)
    hard = train(hard_cfg, cfg_m, trained["data"], trained["val"])
    soft_pck = evaluate_pck(PoseModel(cfg_m, trained["result"].ema_params), trained["val"], 0.1)
    hard_pck = evaluate_pck(PoseModel(cfg_m, hard.ema_params), trained["val"], 0.1)
    log_path = trained["out"] / "ablation_metrics.jsonl"
    with open(log_path, "w") as fh:
        for arm, result in (("soft", trained["result"]), ("hard", hard)):
            for rec in result.log:
                fh.write(json.dumps({"arm": arm, **rec}) + "\n")
        fh.write(json.dumps({"arm": "summary", "soft_pck": soft_pck, "hard_pck": hard_pck}) + "\n")
    holds = soft_pck >= hard_pck - 0.01
    record_criterion(9, holds, f"soft PCK@0.1={soft_pck:.3f}, one-hot={hard_pck:.3f} "
                               f"(report only; log at {log_path})")


# ---------------------------------------------------------------- criterion 10

def test_criterion_10_bench():
    stats = run_bench(PoseModel(ModelConfig(), init_model(ModelConfig(), 0)))
    protocol = all(s["warmup"] == 50 and s["iterations"] == 200 for s in stats.values())
    ok = (WARMUP, ITERATIONS) == (50, 200) and tuple(stats) == STAGES and protocol
    breakdown = ", ".join(f"{k} {v['mean_ms']:.2f}ms" for k, v in stats.items())
    record_criterion(10, ok, f"50 warm-up + 200 timed per stage: {protocol}; {breakdown}")
    assert ok
