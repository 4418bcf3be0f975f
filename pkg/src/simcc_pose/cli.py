"""Command line: ``simcc-pose {train,infer,eval,bench}``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import cv2
import numpy as np

from . import plotting
from .bench import run_bench
from .evaluation import EvalResult, eval_ap, pck
from .io import ConfigError, WeightsFormatError, dump_config, load_config, load_weights, save_weights
from .kernel import ShapeError
from .geometry import BBox
from .model import ModelConfig, PoseModel, init_model
from .pipeline import BlobDetector, GroundTruthDetector, PipelineState, pose_record, process_frame
from .synthetic import make_clip, make_dataset
from .trainer import train

log = logging.getLogger("simcc_pose")

HOLDOUT_SEED_OFFSET = 1_000_003


class CliError(Exception):
    pass


def parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    return w, h


def _configs(args):
    model, training, pipe = load_config(args.config)
    if getattr(args, "input_size", None):
        w, h = args.input_size
        model = dataclasses.replace(model, input_w=w, input_h=h)
    if getattr(args, "seed", None) is not None:
        training = dataclasses.replace(training, seed=args.seed)
    if getattr(args, "detect_interval", None) is not None:
        pipe = dataclasses.replace(pipe, detect_interval=args.detect_interval)
    return model, training, pipe


def _load_model(args, model_cfg: ModelConfig, required: bool = True) -> PoseModel:
    if args.weights is None:
        if required:
            raise CliError("--weights is required")
        return PoseModel(model_cfg, init_model(model_cfg, 0))
    if not Path(args.weights).exists():
        raise CliError(f"weights file not found: {args.weights}")
    template = init_model(model_cfg, 0)
    return PoseModel(model_cfg, load_weights(args.weights, template))


def cmd_train(args) -> int:
    model_cfg, cfg, pipe = _configs(args)
    if args.hard_labels:
        cfg = dataclasses.replace(cfg, soft_labels=False)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = make_dataset(args.samples, cfg.seed, model_cfg.input_w, model_cfg.input_h, model_cfg.k_pts)
    val = make_dataset(args.val_samples, cfg.seed + HOLDOUT_SEED_OFFSET, model_cfg.input_w, model_cfg.input_h,
                       model_cfg.k_pts)
    metrics_path = out / "metrics.jsonl"
    with open(metrics_path, "w") as fh:
        def write(rec):
            fh.write(json.dumps(rec) + "\n")
            fh.flush()
        result = train(cfg, model_cfg, data, val, on_epoch=write)
    meta = {"k_pts": model_cfg.k_pts, "input": [model_cfg.input_w, model_cfg.input_h]}
    save_weights(result.params, out / "weights.spw", meta)
    save_weights(result.ema_params, out / "weights_ema.spw", meta)
    (out / "config.yaml").write_text(dump_config(model_cfg, cfg, pipe))
    if not args.no_figures:
        plotting.plot_training(result.log, out / "training.png")
    last = result.log[-1]
    print(json.dumps({"loss": last["loss"], "pck": last.get("pck"), "ema_pck": last.get("ema_pck"),
                      "weights": str(out / "weights.spw"), "ema_weights": str(out / "weights_ema.spw")}))
    return 0


def _read_frames(folder: Path) -> list[np.ndarray]:
    paths = sorted(p for p in folder.iterdir() if p.suffix.lower() in {".png", ".jpg", ".jpeg", ".bmp"})
    if not paths:
        raise CliError(f"no image files in {folder}")
    frames = []
    for p in paths:
        img = cv2.imread(str(p), cv2.IMREAD_COLOR)
        if img is None:
            raise CliError(f"cannot read image {p}")
        frames.append(img[:, :, ::-1].transpose(2, 0, 1).astype(np.float64) / 255.0)
    return frames


def cmd_infer(args) -> int:
    model_cfg, _, pipe = _configs(args)
    model = _load_model(args, model_cfg)
    if args.frames:
        frames, gt = _read_frames(Path(args.frames)), None
    else:
        frames, gt = make_clip(args.synthetic_frames, args.clip_seed, n_people=args.people, k_pts=model_cfg.k_pts)
    gt_boxes = None
    if args.detector == "gt":
        if gt is None:
            raise CliError("--detector gt needs a synthetic clip")
        gt_boxes = [[BBox(*pts.min(0), *np.maximum(pts.max(0) - pts.min(0), 1.0)) for pts in people]
                    for people in gt]
    blob = BlobDetector()
    state = PipelineState(pipe)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    last = None
    with open(out, "w") as fh:
        for i, frame in enumerate(frames):
            detector = blob if gt_boxes is None else GroundTruthDetector([gt_boxes[i]])
            _, poses = process_frame(state, frame, detector, model, timestamp=i / pipe.rate)
            fh.write(json.dumps(pose_record(i, poses)) + "\n")
            last = (frame, poses)
    if not args.no_figures and last is not None:
        plotting.plot_frame(last[0], last[1], out.with_suffix(".png"), [p.bbox for p in last[1] if p.bbox])
    print(json.dumps({"frames": len(frames), "detector_invocations": state.detector_calls,
                      "pose_stream": str(out)}))
    return 0


def _load_records(path: Path):
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc
    return raw


def _gt_from_coco(raw) -> list[dict]:
    anns = raw["annotations"] if isinstance(raw, dict) else raw
    out = []
    for a in anns:
        kp = np.asarray(a["keypoints"], float).reshape(-1, 3)
        area = a.get("area")
        if area is None:
            x, y, w, h = a["bbox"]
            area = w * h
        out.append({"image_id": a["image_id"], "keypoints": kp, "area": float(area)})
    return out


def _pred_from_coco(raw) -> list[dict]:
    items = raw["annotations"] if isinstance(raw, dict) else raw
    return [{"image_id": d["image_id"], "keypoints": np.asarray(d["keypoints"], float).reshape(-1, 3),
             "score": float(d.get("score", 1.0))} for d in items]


def model_predictions(model: PoseModel, samples) -> tuple[list[dict], list[dict], float]:
    """Predict on samples; returns COCO-style predictions, ground truth and PCK@0.1."""
    pred = model.predict(np.stack([s.image for s in samples]))
    area = float(model.cfg.input_w * model.cfg.input_h)
    preds, gts = [], []
    for i, (s, kp) in enumerate(zip(samples, pred)):
        gts.append({"image_id": i, "area": area,
                    "keypoints": np.column_stack([s.coords, 2.0 * s.visible])})
        preds.append({"image_id": i, "keypoints": kp, "score": float(kp[:, 2].mean())})
    norm = np.full(len(samples), float(max(model.cfg.input_w, model.cfg.input_h)))
    p = pck(pred[..., :2], np.stack([s.coords for s in samples]), np.stack([s.visible for s in samples]), 0.1, norm)
    return preds, gts, p


def cmd_eval(args) -> int:
    model_cfg, cfg, _ = _configs(args)
    if args.gt:
        gts = _gt_from_coco(_load_records(Path(args.gt)))
        preds = _pred_from_coco(_load_records(Path(args.pred))) if args.pred else []
        result = eval_ap(preds, gts, args.kpt_k)
    else:
        model = _load_model(args, model_cfg)
        samples = make_dataset(args.samples, cfg.seed + HOLDOUT_SEED_OFFSET, model_cfg.input_w,
                               model_cfg.input_h, model_cfg.k_pts)
        preds, gts, p = model_predictions(model, samples)
        result = eval_ap(preds, gts, args.kpt_k)
        result = EvalResult(result.ap, result.per_threshold, p)
    payload = result.as_dict()
    print(json.dumps(payload))
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(payload, indent=2) + "\n")
        if not args.no_figures:
            plotting.plot_ap(result.per_threshold, out.with_suffix(".png"))
    return 0


def cmd_bench(args) -> int:
    model_cfg, _, pipe = _configs(args)
    model = _load_model(args, model_cfg, required=False)
    stats = run_bench(model, pipe, seed=args.seed or 0)
    writer = csv.writer(sys.stdout)
    writer.writerow(["stage", "warmup", "iterations", "mean_ms", "median_ms"])
    rows = [[k, v["warmup"], v["iterations"], f"{v['mean_ms']:.4f}", f"{v['median_ms']:.4f}"] for k, v in stats.items()]
    writer.writerows(rows)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["stage", "warmup", "iterations", "mean_ms", "median_ms"])
            w.writerows(rows)
        if not args.no_figures:
            plotting.plot_latency(stats, out.with_suffix(".png"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simcc-pose", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, weights=True):
        p.add_argument("--config", type=Path, help="YAML file with model/training/pipeline sections")
        p.add_argument("--seed", type=int)
        p.add_argument("--input-size", type=parse_size, metavar="WxH")
        p.add_argument("--no-figures", action="store_true", help="skip rendering PNG figures")
        if weights:
            p.add_argument("--weights", type=Path)

    p = sub.add_parser("train", help="train on synthetic samples")
    common(p, weights=False)
    p.add_argument("--out", default="runs/train", help="output directory")
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--val-samples", type=int, default=100)
    p.add_argument("--hard-labels", action="store_true", help="one-hot targets instead of soft labels")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="run the video pipeline and write a pose stream")
    common(p)
    p.add_argument("--frames", type=Path, help="directory of image files (sorted by name)")
    p.add_argument("--synthetic-frames", type=int, default=10)
    p.add_argument("--clip-seed", type=int, default=0)
    p.add_argument("--people", type=int, default=1)
    p.add_argument("--detector", choices=["blob", "gt"], default="blob")
    p.add_argument("--detect-interval", type=int, metavar="K")
    p.add_argument("--out", default="runs/poses.jsonl")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="OKS AP (and PCK for model runs)")
    common(p)
    p.add_argument("--gt", type=Path, help="COCO-style ground truth JSON")
    p.add_argument("--pred", type=Path, help="COCO-style keypoint results JSON")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--kpt-k", type=float, default=0.05)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="per-stage latency, 50 warm-up + 200 timed runs")
    common(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (CliError, ConfigError, WeightsFormatError, ShapeError, FileNotFoundError) as exc:
        print(f"simcc-pose: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
