"""Training losses paired with their output-side gradients."""

from __future__ import annotations

import numpy as np


def mae_loss(pred: np.ndarray, target: np.ndarray):
    """Mean absolute error over a batch of scalar predictions.

    Returns (loss, dpred) with dpred = sign(pred - target) / batch, the
    subgradient used at the (measure-zero) kink.
    """
    pred = pred.reshape(-1)
    target = target.reshape(-1)
    diff = pred - target
    loss = float(np.mean(np.abs(diff)))
    grad = np.sign(diff) / diff.shape[0]
    return loss, grad.reshape(-1, 1)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def cce_loss(logits: np.ndarray, labels: np.ndarray):
    """Categorical cross entropy from raw logits and integer labels.

    Returns (loss, dlogits) with dlogits = (softmax - onehot) / batch.
    Probabilities are clamped to [1e-12, 1 - 1e-12] inside the log only;
    the gradient keeps its exact softmax form.
    """
    B = logits.shape[0]
    p = softmax(logits)
    picked = np.clip(p[np.arange(B), labels], 1e-12, 1.0 - 1e-12)
    loss = float(-np.mean(np.log(picked)))
    grad = p.copy()
    grad[np.arange(B), labels] -= 1.0
    return loss, grad / B
