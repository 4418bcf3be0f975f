"""Dense float64 tensor math shared by the backbone, head and trainer.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 in C order.
Every public op checks shapes explicitly and refuses to return non-finite
values, so a NaN surfaces at the op that produced it.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

DTYPE = np.float64


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ParameterError(ValueError):
    """A scalar hyper-parameter is outside its valid range."""


class ContractError(RuntimeError):
    """A cache was handed to a backward pass it did not come from."""


class NonFiniteError(FloatingPointError):
    """An op produced NaN or Inf."""


def as_tensor(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=DTYPE)


def check_finite(x: np.ndarray, where: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"{where}: non-finite values in output")
    return x


def make_rng(seed: int) -> np.random.Generator:
    if seed < 0 or seed >= 2**64:
        raise ParameterError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(DTYPE)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of ``a[..., m, k]`` and ``b[k, n]`` (or matching batch)."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return check_finite(np.matmul(a, b), "matmul")


def _check_conv_args(x: np.ndarray, w: np.ndarray, bias: np.ndarray) -> int:
    if w.ndim != 4 or w.shape[2] != w.shape[3]:
        raise ShapeError(f"conv2d: kernel must be O x C x k x k, got {w.shape}")
    k = w.shape[2]
    if k % 2 == 0:
        raise ParameterError(f"conv2d: unsupported even kernel size {k}")
    if x.shape[-3] != w.shape[1]:
        raise ShapeError(f"conv2d: input channels {x.shape[-3]} != kernel channels {w.shape[1]}")
    if bias.shape != (w.shape[0],):
        raise ShapeError(f"conv2d: bias shape {bias.shape} != ({w.shape[0]},)")
    return k


def conv_windows(x: np.ndarray, k: int, stride: int = 1) -> np.ndarray:
    """Zero-padded k x k patches of ``x[N, C, H, W]`` -> ``[N, C, H/s, W/s, k, k]``."""
    p = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def conv2d(x: np.ndarray, w: np.ndarray, bias: np.ndarray, stride: int = 1) -> np.ndarray:
    """Same-padded cross-correlation, optionally strided.

    Accepts ``x`` as C x H x W or N x C x H x W. With stride 2 the result is
    the stride-1 output sampled at even rows and columns.
    """
    k = _check_conv_args(x, w, bias)
    single = x.ndim == 3
    xb = x[None] if single else x
    if xb.ndim != 4:
        raise ShapeError(f"conv2d: expected C x H x W input, got {x.shape}")
    win = conv_windows(xb, k, stride)
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # N, H, W, O
    out = out.transpose(0, 3, 1, 2) + bias[None, :, None, None]
    out = np.ascontiguousarray(out)
    check_finite(out, "conv2d")
    return out[0] if single else out


def conv2d_same(x: np.ndarray, w: np.ndarray, bias: np.ndarray) -> np.ndarray:
    return conv2d(x, w, bias, stride=1)


def conv2d_backward(
    x: np.ndarray, w: np.ndarray, grad_out: np.ndarray, stride: int = 1, need_input: bool = True
):
    """Gradients of :func:`conv2d` for batched ``x``.

    Returns ``(grad_x, grad_w, grad_bias)``; ``grad_x`` is None when
    ``need_input`` is False.
    """
    k = w.shape[2]
    win = conv_windows(x, k, stride)
    grad_w = np.tensordot(grad_out, win, axes=([0, 2, 3], [0, 2, 3]))  # O, C, k, k
    grad_b = grad_out.sum(axis=(0, 2, 3))
    grad_x = None
    if need_input:
        n, _, h, wd = x.shape
        if stride == 1:
            full = grad_out
        else:
            full = np.zeros((n, w.shape[0], h, wd), dtype=DTYPE)
            full[:, :, ::stride, ::stride] = grad_out
        # adjoint of same-padded correlation: flipped kernel, channels swapped
        w_adj = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        grad_x = conv2d(full, w_adj, np.zeros(w.shape[1], dtype=DTYPE))
    return grad_x, grad_w, grad_b


def softmax_t(logits: np.ndarray, tau: float = 1.0) -> np.ndarray:
    """Softmax of ``logits / tau`` along the last axis."""
    if not tau > 0:
        raise ParameterError(f"softmax temperature must be positive, got {tau}")
    z = logits / tau
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return check_finite(e / e.sum(axis=-1, keepdims=True), "softmax_t")


def log_softmax_t(logits: np.ndarray, tau: float = 1.0) -> np.ndarray:
    if not tau > 0:
        raise ParameterError(f"softmax temperature must be positive, got {tau}")
    z = logits / tau
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def relu_squared(x: np.ndarray) -> np.ndarray:
    r = np.maximum(x, 0.0)
    return r * r


def sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)


def silu(x: np.ndarray) -> np.ndarray:
    return x * sigmoid(x)


def silu_grad(x: np.ndarray) -> np.ndarray:
    s = sigmoid(x)
    return s * (1.0 + x * (1.0 - s))
