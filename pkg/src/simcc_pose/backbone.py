"""Three stride-2 conv stages (3 -> 8 -> 16 -> 32 channels), 1/8 output resolution."""

from __future__ import annotations

import numpy as np

from .kernel import ContractError, ShapeError, check_finite, conv2d, conv2d_backward, make_rng, silu, silu_grad, uniform_init

DEFAULT_CHANNELS = (8, 16, 32)
STAGE_KERNEL = 3
STRIDE = 2


def stage_names(n_stages: int) -> list[str]:
    return [f"stage{i}" for i in range(n_stages)]


def init_backbone(in_channels: int = 3, channels=DEFAULT_CHANNELS, seed: int = 0,
                  kernel: int = STAGE_KERNEL) -> dict:
    rng = make_rng(seed)
    p = {}
    c_in = in_channels
    for name, c_out in zip(stage_names(len(channels)), channels):
        p[f"{name}.w"] = uniform_init(rng, (c_out, c_in, kernel, kernel), c_in * kernel * kernel)
        p[f"{name}.b"] = np.zeros(c_out)
        c_in = c_out
    return p


def n_stages(p: dict) -> int:
    return sum(1 for k in p if k.endswith(".w"))


def feature_dims(p: dict, input_h: int, input_w: int) -> tuple[int, int, int]:
    n = n_stages(p)
    c = p[f"stage{n - 1}.w"].shape[0]
    f = STRIDE**n
    return c, input_h // f, input_w // f


def backbone_forward(img: np.ndarray, p: dict):
    """Image ``3 x H x W`` (or batched) -> feature map ``C x H/8 x W/8``.

    Each stage is a same-padded conv sampled at stride 2 followed by SiLU.
    """
    single = img.ndim == 3
    x = img[None] if single else img
    if x.ndim != 4:
        raise ShapeError(f"backbone: expected 3 x H x W image, got {img.shape}")
    n = n_stages(p)
    factor = STRIDE**n
    if x.shape[2] % factor or x.shape[3] % factor:
        raise ShapeError(f"backbone: H, W must be divisible by {factor}, got {x.shape[2]}x{x.shape[3]}")
    inputs, pre = [], []
    for name in stage_names(n):
        inputs.append(x)
        h = conv2d(x, p[f"{name}.w"], p[f"{name}.b"], stride=STRIDE)
        pre.append(h)
        x = silu(h)
    check_finite(x, "backbone_forward")
    cache = {"kind": "backbone", "params": p, "single": single, "inputs": inputs, "pre": pre}
    return (x[0] if single else x), cache


def backbone_backward(cache: dict, grad_feature: np.ndarray, p: dict) -> dict:
    if cache.get("kind") != "backbone" or cache["params"] is not p:
        raise ContractError("backbone_backward: cache does not belong to these parameters")
    g = grad_feature[None] if cache["single"] else grad_feature
    if g.shape != cache["pre"][-1].shape:
        raise ShapeError(f"backbone_backward: grad {g.shape} != features {cache['pre'][-1].shape}")
    grads = {}
    names = stage_names(n_stages(p))
    for i in reversed(range(len(names))):
        name = names[i]
        g = g * silu_grad(cache["pre"][i])
        g_in, grads[f"{name}.w"], grads[f"{name}.b"] = conv2d_backward(
            cache["inputs"][i], p[f"{name}.w"], g, stride=STRIDE, need_input=i > 0
        )
        g = g_in
    return grads
