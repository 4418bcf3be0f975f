"""KL divergence between per-axis soft labels and tempered predictions."""

from __future__ import annotations

import numpy as np

from .kernel import ContractError, ShapeError, log_softmax_t, softmax_t

LABEL_SUM_TOL = 1e-6


def kl_loss(
    logits_x: np.ndarray,
    logits_y: np.ndarray,
    label_x: np.ndarray,
    label_y: np.ndarray,
    tau: float = 0.1,
    weight: np.ndarray | None = None,
):
    """Mean of KL(label || softmax(logits / tau)) over keypoints and both axes.

    Arrays are ``[..., K, bins]``; ``weight[..., K]`` masks keypoints out
    (invisible ones). Returns ``(loss, grad_logits_x, grad_logits_y)``.
    """
    for name, logit, label in (("x", logits_x, label_x), ("y", logits_y, label_y)):
        if logit.shape != label.shape:
            raise ShapeError(f"kl_loss[{name}]: logits {logit.shape} != labels {label.shape}")
        if np.any(np.abs(label.sum(axis=-1) - 1.0) > LABEL_SUM_TOL) or np.any(label < 0):
            raise ContractError(f"kl_loss[{name}]: labels must be probability vectors")
    if weight is None:
        weight = np.ones(logits_x.shape[:-1])
    count = 2.0 * weight.sum()
    if count == 0:
        return 0.0, np.zeros_like(logits_x), np.zeros_like(logits_y)

    loss = 0.0
    grads = []
    for logit, label in ((logits_x, label_x), (logits_y, label_y)):
        logp = log_softmax_t(logit, tau)
        safe = np.where(label > 0, label, 1.0)
        kl = np.sum(np.where(label > 0, label * (np.log(safe) - logp), 0.0), axis=-1)
        loss += float(np.sum(kl * weight))
        grads.append((softmax_t(logit, tau) - label) * (weight / (tau * count))[..., None])
    return loss / count, grads[0], grads[1]
