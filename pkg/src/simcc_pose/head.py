"""Prediction head: large-kernel conv -> keypoint tokens -> FC -> GAU -> per-axis classifiers.

Parameters are flat ``dict[str, ndarray]`` keyed as in :data:`HEAD_KEYS`.
Forward functions accept a leading batch axis and return a cache that the
matching backward consumes; parameter gradients are summed over the batch.

GAU block (one layer, pre-norm, residual)::

    Xn = LayerNorm(X)                      (toggle: prenorm)
    Z  = silu(Xn W_z)                      n x s
    q  = q_scale * Z + q_offset,  k = k_scale * Z + k_offset
    A  = relu(q k^T / sqrt(s))^2 / n       n x n, non-negative
    U  = silu(Xn W_u),  V = silu(Xn W_v)   n x e
    out = X + (U * (A V)) W_o              (toggle: residual)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .codec import BinSpec
from .kernel import (
    DTYPE,
    ContractError,
    ShapeError,
    check_finite,
    conv2d,
    conv2d_backward,
    make_rng,
    relu_squared,
    silu,
    silu_grad,
    uniform_init,
)

HIDDEN_DIM = 256
ATTN_DIM = 128
HEAD_KERNEL = 7
LN_EPS = 1e-5


@dataclass(frozen=True)
class GauConfig:
    prenorm: bool = True
    residual: bool = True


GAU_KEYS = (
    "w_u", "w_v", "w_z", "q_scale", "q_offset", "k_scale", "k_offset", "w_o",
    "norm_gain", "norm_bias",
)
HEAD_KEYS = ("conv_w", "conv_b", "fc_w", "fc_b", *(f"gau.{k}" for k in GAU_KEYS),
             "cls_x_w", "cls_x_b", "cls_y_w", "cls_y_b")


def init_gau(d: int, s: int = ATTN_DIM, e: int | None = None, seed: int = 0, rng=None) -> dict:
    e = 2 * d if e is None else e
    rng = make_rng(seed) if rng is None else rng
    return {
        "w_u": uniform_init(rng, (d, e), d),
        "w_v": uniform_init(rng, (d, e), d),
        "w_z": uniform_init(rng, (d, s), d),
        "q_scale": uniform_init(rng, (s,), 1),
        "q_offset": np.zeros(s),
        "k_scale": uniform_init(rng, (s,), 1),
        "k_offset": np.zeros(s),
        "w_o": uniform_init(rng, (e, d), e),
        "norm_gain": np.ones(d),
        "norm_bias": np.zeros(d),
    }


def _layer_norm(x, gain, bias):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    return xhat * gain + bias, xhat, inv


def _layer_norm_backward(dy, xhat, inv, gain):
    dxhat = dy * gain
    return inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                  - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))


def _sum_batch(g, ndim):
    return g.reshape(-1, *g.shape[-ndim:]).sum(axis=0) if g.ndim > ndim else g


def gau_forward(x: np.ndarray, p: dict, cfg: GauConfig = GauConfig()):
    """One GAU layer over ``x[..., n, d]``. Returns ``(out, cache)``."""
    d = p["w_u"].shape[0]
    if x.ndim < 2 or x.shape[-1] != d:
        raise ShapeError(f"gau: input {x.shape} does not end in feature dim {d}")
    n = x.shape[-2]
    s = p["w_z"].shape[1]
    if cfg.prenorm:
        xn, xhat, inv = _layer_norm(x, p["norm_gain"], p["norm_bias"])
    else:
        xn, xhat, inv = x, None, None
    hz = xn @ p["w_z"]
    z = silu(hz)
    q = z * p["q_scale"] + p["q_offset"]
    k = z * p["k_scale"] + p["k_offset"]
    scores = q @ np.swapaxes(k, -1, -2) / math.sqrt(s)
    attn = relu_squared(scores) / n
    hu = xn @ p["w_u"]
    hv = xn @ p["w_v"]
    u, v = silu(hu), silu(hv)
    av = attn @ v
    gated = u * av
    o = gated @ p["w_o"]
    out = x + o if cfg.residual else o
    check_finite(out, "gau_forward")
    cache = {
        "kind": "gau", "params": p, "cfg": cfg, "x_shape": x.shape,
        "xn": xn, "xhat": xhat, "inv": inv, "hz": hz, "z": z, "q": q, "k": k,
        "scores": scores, "attn": attn, "hu": hu, "hv": hv, "u": u, "v": v,
        "av": av, "gated": gated,
    }
    return out, cache


def gau_backward(cache: dict, grad_out: np.ndarray, p: dict):
    """Returns ``(grads, grad_x)`` for :func:`gau_forward`."""
    if cache.get("kind") != "gau" or cache["params"] is not p:
        raise ContractError("gau_backward: cache does not belong to these parameters")
    if grad_out.shape != cache["x_shape"]:
        raise ShapeError(f"gau_backward: grad {grad_out.shape} != output {cache['x_shape']}")
    c = cache
    cfg = c["cfg"]
    n = grad_out.shape[-2]
    s = p["w_z"].shape[1]
    root_s = math.sqrt(s)

    g = {}
    g["w_o"] = _sum_batch(np.swapaxes(c["gated"], -1, -2) @ grad_out, 2)
    d_gated = grad_out @ p["w_o"].T
    d_u = d_gated * c["av"]
    d_av = d_gated * c["u"]
    d_attn = d_av @ np.swapaxes(c["v"], -1, -2)
    d_v = np.swapaxes(c["attn"], -1, -2) @ d_av
    d_scores = d_attn * (2.0 / n) * np.maximum(c["scores"], 0.0)
    d_q = d_scores @ c["k"] / root_s
    d_k = np.swapaxes(d_scores, -1, -2) @ c["q"] / root_s
    g["q_scale"] = (d_q * c["z"]).reshape(-1, s).sum(0)
    g["q_offset"] = d_q.reshape(-1, s).sum(0)
    g["k_scale"] = (d_k * c["z"]).reshape(-1, s).sum(0)
    g["k_offset"] = d_k.reshape(-1, s).sum(0)
    d_z = d_q * p["q_scale"] + d_k * p["k_scale"]
    d_hz = d_z * silu_grad(c["hz"])
    d_hu = d_u * silu_grad(c["hu"])
    d_hv = d_v * silu_grad(c["hv"])
    xn_t = np.swapaxes(c["xn"], -1, -2)
    g["w_z"] = _sum_batch(xn_t @ d_hz, 2)
    g["w_u"] = _sum_batch(xn_t @ d_hu, 2)
    g["w_v"] = _sum_batch(xn_t @ d_hv, 2)
    d_xn = d_hz @ p["w_z"].T + d_hu @ p["w_u"].T + d_hv @ p["w_v"].T
    d = d_xn.shape[-1]
    if cfg.prenorm:
        g["norm_gain"] = (d_xn * c["xhat"]).reshape(-1, d).sum(0)
        g["norm_bias"] = d_xn.reshape(-1, d).sum(0)
        d_x = _layer_norm_backward(d_xn, c["xhat"], c["inv"], p["norm_gain"])
    else:
        g["norm_gain"] = np.zeros_like(p["norm_gain"])
        g["norm_bias"] = np.zeros_like(p["norm_bias"])
        d_x = d_xn
    if cfg.residual:
        d_x = d_x + grad_out
    return g, d_x


def init_head(spec: BinSpec, k_pts: int, feature_dims: tuple[int, int, int], seed: int = 0,
              hidden: int = HIDDEN_DIM, attn_dim: int = ATTN_DIM, expansion: int | None = None,
              kernel: int = HEAD_KERNEL) -> dict:
    c, h, w = feature_dims
    rng = make_rng(seed)
    token = h * w
    p = {
        "conv_w": uniform_init(rng, (k_pts, c, kernel, kernel), c * kernel * kernel),
        "conv_b": np.zeros(k_pts),
        "fc_w": uniform_init(rng, (token, hidden), token),
        "fc_b": np.zeros(hidden),
    }
    for key, val in init_gau(hidden, attn_dim, expansion, rng=rng).items():
        p[f"gau.{key}"] = val
    p["cls_x_w"] = uniform_init(rng, (hidden, spec.bins_x), hidden)
    p["cls_x_b"] = np.zeros(spec.bins_x)
    p["cls_y_w"] = uniform_init(rng, (hidden, spec.bins_y), hidden)
    p["cls_y_b"] = np.zeros(spec.bins_y)
    return p


def gau_params(p: dict) -> dict:
    return {k: p[f"gau.{k}"] for k in GAU_KEYS}


def head_forward(f: np.ndarray, p: dict, spec: BinSpec, cfg: GauConfig = GauConfig()):
    """Logits for one feature map ``C x H' x W'`` or a batch ``N x C x H' x W'``.

    Returns ``(logits_x[..., K, bins_x], logits_y[..., K, bins_y], cache)``.
    """
    single = f.ndim == 3
    fb = f[None] if single else f
    if fb.ndim != 4:
        raise ShapeError(f"head[input]: expected C x H x W feature map, got {f.shape}")
    k_pts, c_in = p["conv_w"].shape[:2]
    if fb.shape[1] != c_in:
        raise ShapeError(f"head[conv]: feature channels {fb.shape[1]} != {c_in}")
    token = fb.shape[2] * fb.shape[3]
    if token != p["fc_w"].shape[0]:
        raise ShapeError(
            f"head[fc_expand]: token length {token} (from {fb.shape[2]}x{fb.shape[3]}) "
            f"!= {p['fc_w'].shape[0]}"
        )
    if p["cls_x_w"].shape[1] != spec.bins_x or p["cls_y_w"].shape[1] != spec.bins_y:
        raise ShapeError(
            f"head[classifier]: params predict {p['cls_x_w'].shape[1]}+{p['cls_y_w'].shape[1]} "
            f"bins, spec needs {spec.bins_x}+{spec.bins_y}"
        )
    conv = conv2d(fb, p["conv_w"], p["conv_b"])
    tokens = conv.reshape(fb.shape[0], k_pts, token)
    emb = tokens @ p["fc_w"] + p["fc_b"]
    gp = gau_params(p)
    refined, gcache = gau_forward(emb, gp, cfg)
    lx = refined @ p["cls_x_w"] + p["cls_x_b"]
    ly = refined @ p["cls_y_w"] + p["cls_y_b"]
    check_finite(lx, "head_forward")
    check_finite(ly, "head_forward")
    cache = {"kind": "head", "params": p, "single": single, "f": fb, "tokens": tokens,
             "gau": gcache, "gau_params": gp, "refined": refined}
    if single:
        return lx[0], ly[0], cache
    return lx, ly, cache


def head_backward(cache: dict, grad_x: np.ndarray, grad_y: np.ndarray, p: dict):
    """Returns ``(grads, grad_features)`` matching :func:`head_forward`."""
    if cache.get("kind") != "head" or cache["params"] is not p:
        raise ContractError("head_backward: cache does not belong to these parameters")
    if cache["single"]:
        grad_x, grad_y = grad_x[None], grad_y[None]
    refined = cache["refined"]
    if grad_x.shape[:-1] != refined.shape[:-1] or grad_y.shape[:-1] != refined.shape[:-1]:
        raise ShapeError(f"head_backward: logit grads {grad_x.shape}, {grad_y.shape} "
                         f"do not match tokens {refined.shape}")
    hid = refined.shape[-1]
    flat_r = refined.reshape(-1, hid)
    g = {
        "cls_x_w": flat_r.T @ grad_x.reshape(-1, grad_x.shape[-1]),
        "cls_x_b": grad_x.reshape(-1, grad_x.shape[-1]).sum(0),
        "cls_y_w": flat_r.T @ grad_y.reshape(-1, grad_y.shape[-1]),
        "cls_y_b": grad_y.reshape(-1, grad_y.shape[-1]).sum(0),
    }
    d_refined = grad_x @ p["cls_x_w"].T + grad_y @ p["cls_y_w"].T
    gg, d_emb = gau_backward(cache["gau"], d_refined, cache["gau_params"])
    for key, val in gg.items():
        g[f"gau.{key}"] = val
    tokens = cache["tokens"]
    g["fc_w"] = tokens.reshape(-1, tokens.shape[-1]).T @ d_emb.reshape(-1, hid)
    g["fc_b"] = d_emb.reshape(-1, hid).sum(0)
    d_tokens = d_emb @ p["fc_w"].T
    fb = cache["f"]
    d_conv = d_tokens.reshape(fb.shape[0], -1, fb.shape[2], fb.shape[3])
    d_f, g["conv_w"], g["conv_b"] = conv2d_backward(fb, p["conv_w"], d_conv)
    if cache["single"]:
        d_f = d_f[0]
    return g, d_f


def zeros_like_params(p: dict) -> dict:
    return {k: np.zeros_like(v, dtype=DTYPE) for k, v in p.items()}


__all__ = [
    "ATTN_DIM", "HIDDEN_DIM", "ContractError", "GauConfig", "gau_forward", "gau_backward",
    "head_forward", "head_backward", "init_gau", "init_head",
]
