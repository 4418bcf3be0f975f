"""End-to-end training on synthetic samples: strong stage, then weak stage."""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .augment import STRONG, WEAK, AugmentationConfig, augment
from .codec import encode_keypoints
from .evaluation import pck
from .kernel import NonFiniteError, make_rng
from .loss import kl_loss
from .model import ModelConfig, PoseModel, init_model
from .optim import AdamWState, adamw_step, ema_decay_at, ema_update, flat_cosine_lr
from .synthetic import SyntheticSample

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    base_lr: float = 0.004
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.0
    ema_decay: float = 0.9998
    epochs_strong: int = 180
    epochs_weak: int = 30
    batch_size: int = 1024
    tau: float = 0.1
    warmup_iters: int = 1000
    flat_fraction: float = 0.5
    seed: int = 0
    soft_labels: bool = True
    pck_threshold: float = 0.1

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        """Defaults scaled to 500 samples x 70 epochs on one CPU core."""
        base = dict(epochs_strong=60, epochs_weak=10, batch_size=32, warmup_iters=50, ema_decay=0.99)
        base.update(overrides)
        return cls(**base)

    @property
    def epochs(self) -> int:
        return self.epochs_strong + self.epochs_weak


@dataclass
class TrainResult:
    params: dict
    ema_params: dict
    log: list[dict] = field(default_factory=list)


def stage_for_epoch(epoch: int, cfg: TrainConfig) -> str:
    return "strong" if epoch < cfg.epochs_strong else "weak"


def make_batch(samples: list[SyntheticSample], model_cfg: ModelConfig, tau: float, soft: bool):
    images = np.stack([s.image for s in samples])
    lx, ly, w = zip(*(encode_keypoints(s.coords, s.visible, model_cfg.spec, tau, soft) for s in samples))
    return images, np.stack(lx), np.stack(ly), np.stack(w)


def dataset_loss(model: PoseModel, samples: list[SyntheticSample], tau: float, soft: bool = True,
                 batch: int = 64) -> float:
    total, count = 0.0, 0.0
    for i in range(0, len(samples), batch):
        images, lx, ly, w = make_batch(samples[i:i + batch], model.cfg, tau, soft)
        px, py, _ = model.forward(images)
        loss, _, _ = kl_loss(px, py, lx, ly, tau, w)
        total += loss * w.sum()
        count += w.sum()
    return total / max(count, 1.0)


def evaluate_pck(model: PoseModel, samples: list[SyntheticSample], threshold: float = 0.1) -> float:
    pred = model.predict(np.stack([s.image for s in samples]))
    gt = np.stack([s.coords for s in samples])
    vis = np.stack([s.visible for s in samples])
    norm = max(model.cfg.input_w, model.cfg.input_h)
    return pck(pred[..., :2], gt, vis, threshold, np.full(len(samples), float(norm)))


def train(cfg: TrainConfig, model_cfg: ModelConfig, dataset: list[SyntheticSample],
          val: list[SyntheticSample] | None = None,
          aug_strong: AugmentationConfig = STRONG, aug_weak: AugmentationConfig = WEAK,
          init_params: dict | None = None, on_epoch=None) -> TrainResult:
    """Train backbone and head jointly; returns raw and EMA weights plus a per-epoch log."""
    if not dataset:
        raise ValueError("train: dataset is empty")
    model_cfg = ModelConfig(**{**model_cfg.__dict__, "tau": cfg.tau})
    params = init_params if init_params is not None else init_model(model_cfg, cfg.seed)
    ema = copy.deepcopy(params)
    model = PoseModel(model_cfg, params)
    opt = AdamWState()
    rng = make_rng(cfg.seed + 17)
    steps_per_epoch = math.ceil(len(dataset) / cfg.batch_size)
    total = steps_per_epoch * cfg.epochs
    step = 0
    history = []
    for epoch in range(cfg.epochs):
        stage = stage_for_epoch(epoch, cfg)
        aug = aug_strong if stage == "strong" else aug_weak
        order = rng.permutation(len(dataset))
        running, seen = 0.0, 0.0
        for b in range(steps_per_epoch):
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            batch = [augment(dataset[i], aug, rng) for i in idx]
            images, lx, ly, w = make_batch(batch, model_cfg, cfg.tau, cfg.soft_labels)
            try:
                px, py, cache = model.forward(images)
                loss, gx, gy = kl_loss(px, py, lx, ly, cfg.tau, w)
                if not np.isfinite(loss):
                    raise NonFiniteError(f"loss became {loss}")
                grads = model.backward(cache, gx, gy)
            except NonFiniteError as exc:
                raise DivergenceError(f"training diverged at epoch {epoch}, step {step}: {exc}") from exc
            lr = flat_cosine_lr(step, total, cfg.base_lr, cfg.warmup_iters, cfg.flat_fraction)
            adamw_step(params, grads, opt, lr, cfg.weight_decay, cfg.betas)
            ema_update(ema, params, ema_decay_at(step, cfg.ema_decay))
            step += 1
            running += loss * w.sum()
            seen += w.sum()
        record = {"epoch": epoch, "stage": stage, "loss": running / max(seen, 1.0), "lr": lr}
        if val:
            record["pck"] = evaluate_pck(model, val, cfg.pck_threshold)
            record["ema_pck"] = evaluate_pck(PoseModel(model_cfg, ema), val, cfg.pck_threshold)
        history.append(record)
        log.info("epoch %d [%s] loss=%.4f pck=%s lr=%.2e", epoch, stage, record["loss"],
                 record.get("pck"), lr)
        if on_epoch is not None:
            on_epoch(record)
    return TrainResult(params, ema, history)
