"""Backbone + head bundled behind one parameter dict."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backbone import DEFAULT_CHANNELS, backbone_backward, backbone_forward, feature_dims, init_backbone
from .codec import BinSpec, bin_spec_from_input, decode_batch
from .head import ATTN_DIM, HIDDEN_DIM, GauConfig, head_backward, head_forward, init_head
from .kernel import softmax_t


@dataclass(frozen=True)
class ModelConfig:
    input_w: int = 48
    input_h: int = 64
    k_pts: int = 3
    split_k: float = 2.0
    channels: tuple[int, ...] = DEFAULT_CHANNELS
    hidden: int = HIDDEN_DIM
    attn_dim: int = ATTN_DIM
    prenorm: bool = True
    residual: bool = True
    tau: float = 0.1
    pixel_mean: float = 0.45
    pixel_std: float = 0.25

    @property
    def spec(self) -> BinSpec:
        return bin_spec_from_input(self.input_w, self.input_h, self.split_k)

    @property
    def gau(self) -> GauConfig:
        return GauConfig(prenorm=self.prenorm, residual=self.residual)


def split(params: dict) -> tuple[dict, dict]:
    bb = {k[len("backbone."):]: v for k, v in params.items() if k.startswith("backbone.")}
    hd = {k[len("head."):]: v for k, v in params.items() if k.startswith("head.")}
    return bb, hd


def init_model(cfg: ModelConfig, seed: int = 0) -> dict:
    bb = init_backbone(3, cfg.channels, seed=seed)
    dims = feature_dims(bb, cfg.input_h, cfg.input_w)
    hd = init_head(cfg.spec, cfg.k_pts, dims, seed=seed + 1, hidden=cfg.hidden, attn_dim=cfg.attn_dim)
    params = {f"backbone.{k}": v for k, v in bb.items()}
    params.update({f"head.{k}": v for k, v in hd.items()})
    return params


@dataclass
class PoseModel:
    cfg: ModelConfig
    params: dict = field(repr=False)

    def forward(self, images: np.ndarray):
        """Logits for a batch ``N x 3 x H x W``; returns ``(lx, ly, cache)``."""
        bb, hd = split(self.params)
        x = (images - self.cfg.pixel_mean) / self.cfg.pixel_std
        feats, bcache = backbone_forward(x, bb)
        lx, ly, hcache = head_forward(feats, hd, self.cfg.spec, self.cfg.gau)
        return lx, ly, {"bb": (bcache, bb), "head": (hcache, hd)}

    def backward(self, cache: dict, grad_x: np.ndarray, grad_y: np.ndarray) -> dict:
        hcache, hd = cache["head"]
        bcache, bb = cache["bb"]
        ghead, gfeat = head_backward(hcache, grad_x, grad_y, hd)
        gbb = backbone_backward(bcache, gfeat, bb)
        grads = {f"backbone.{k}": v for k, v in gbb.items()}
        grads.update({f"head.{k}": v for k, v in ghead.items()})
        return grads

    def predict(self, images: np.ndarray, batch: int = 64) -> np.ndarray:
        """Keypoints ``N x K x 3`` (x, y, score) in model-input pixels."""
        single = images.ndim == 3
        images = images[None] if single else images
        out = []
        for i in range(0, len(images), batch):
            lx, ly, _ = self.forward(images[i:i + batch])
            out.append(decode_batch(softmax_t(lx, self.cfg.tau), softmax_t(ly, self.cfg.tau), self.cfg.spec))
        res = np.concatenate(out)
        return res[0] if single else res
