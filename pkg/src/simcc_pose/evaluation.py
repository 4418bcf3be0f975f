"""PCK and COCO-style OKS average precision."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OKS_THRESHOLDS = np.round(np.arange(0.5, 0.951, 0.05), 2)
RECALL_POINTS = np.linspace(0.0, 1.0, 101)


def pck(pred: np.ndarray, gt: np.ndarray, visible: np.ndarray, threshold: float,
        norm: np.ndarray) -> float:
    """Fraction of visible keypoints within ``threshold * norm`` pixels of ground truth.

    ``pred``/``gt`` are ``N x K x 2``; ``norm`` holds one length per instance.
    """
    dist = np.linalg.norm(pred - gt, axis=-1)
    ok = dist <= threshold * norm[:, None]
    n = visible.sum()
    return float((ok & visible).sum() / n) if n else 0.0


def keypoint_oks(pred: np.ndarray, gt: np.ndarray, gt_visible: np.ndarray, area: float,
                 k: np.ndarray) -> float:
    """OKS of predicted keypoints ``K x 2`` against ground truth.

    Keypoints are counted where ``gt_visible``; with none visible the result is 0.
    """
    d2 = np.sum((pred - gt) ** 2, axis=-1)
    e = np.exp(-d2 / (2.0 * max(area, np.finfo(float).eps) * k**2))
    n = gt_visible.sum()
    return float(e[gt_visible].sum() / n) if n else 0.0


@dataclass
class EvalResult:
    ap: float
    per_threshold: dict = field(default_factory=dict)
    pck: float | None = None

    def as_dict(self) -> dict:
        out = {"ap": self.ap, "per_threshold": {f"{t:.2f}": v for t, v in self.per_threshold.items()}}
        if self.pck is not None:
            out["pck"] = self.pck
        return out


def _interpolated_precision(tp: np.ndarray, n_gt: int) -> float:
    if len(tp) == 0:
        return 0.0
    tps = np.cumsum(tp)
    fps = np.cumsum(~tp)
    recall = tps / n_gt
    precision = tps / np.maximum(tps + fps, np.spacing(1))
    # make precision monotone non-increasing from the right
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    q = np.zeros(len(RECALL_POINTS))
    valid = idx < len(precision)
    q[valid] = precision[idx[valid]]
    return float(q.mean())


def eval_ap(predictions: list[dict], ground_truth: list[dict], k: np.ndarray | float = 0.05,
            thresholds=OKS_THRESHOLDS) -> EvalResult:
    """Mean AP over OKS thresholds with 101-point interpolated precision.

    ``ground_truth`` items: ``{"image_id", "keypoints": K x 3 (x, y, v), "area"}``.
    ``predictions`` items: ``{"image_id", "keypoints": K x 2 or K x 3, "score"}``.
    Within an image, predictions are taken by descending score and each is
    matched to the still-unmatched ground truth with highest OKS, if that OKS
    reaches the threshold.
    """
    if not ground_truth:
        raise ValueError("eval_ap: ground truth is empty")
    gts_by_img: dict = {}
    for g in ground_truth:
        gts_by_img.setdefault(g["image_id"], []).append(g)
    dts_by_img: dict = {}
    for d in predictions:
        dts_by_img.setdefault(d["image_id"], []).append(d)
    n_gt = len(ground_truth)

    # OKS tables are threshold independent
    tables = {}
    for img, dts in dts_by_img.items():
        dts = sorted(dts, key=lambda d: -d["score"])  # stable: ties keep input order
        gts = gts_by_img.get(img, [])
        table = np.zeros((len(dts), len(gts)))
        for i, d in enumerate(dts):
            pk = np.asarray(d["keypoints"], float).reshape(-1, np.shape(d["keypoints"])[-1])[:, :2]
            for j, g in enumerate(gts):
                gk = np.asarray(g["keypoints"], float)
                kk = np.broadcast_to(np.asarray(k, float), (len(gk),))
                table[i, j] = keypoint_oks(pk, gk[:, :2], gk[:, 2] > 0, g["area"], kk)
        tables[img] = (dts, table)

    per = {}
    for t in thresholds:
        scores, matched = [], []
        for img, (dts, table) in tables.items():
            taken = np.zeros(table.shape[1], dtype=bool)
            for i, d in enumerate(dts):
                best, best_j = -1.0, -1
                for j in range(table.shape[1]):
                    if not taken[j] and table[i, j] >= t and table[i, j] > best:
                        best, best_j = table[i, j], j
                if best_j >= 0:
                    taken[best_j] = True
                scores.append(d["score"])
                matched.append(best_j >= 0)
        order = np.argsort(-np.asarray(scores), kind="mergesort")
        tp = np.asarray(matched, dtype=bool)[order]
        per[float(t)] = _interpolated_precision(tp, n_gt)
    return EvalResult(ap=float(np.mean(list(per.values()))), per_threshold=per)
