"""Finite-difference verification of the analytic gradients.

Central differences at epsilon on every parameter coordinate, compared
against one backward pass. The relative error denominator is floored at
1e-4: below that scale both estimates sit in floating-point roundoff and a
ratio would measure noise, so tiny gradients are judged absolutely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from coldflow.neural.losses import cce_loss, mae_loss
from coldflow.neural.network import NetworkSpec, backward, forward, init_params


@dataclass(frozen=True)
class GradCheckResult:
    max_rel_error: float
    worst_param: str
    coordinates: int


def finite_difference_check(
    spec: NetworkSpec,
    seed: int = 0,
    batch: int = 3,
    steps: int = 6,
    epsilon: float = 1e-5,
) -> GradCheckResult:
    """Compare BPTT gradients with central differences on random data.

    For linear heads the loss is MAE against targets offset by at least
    0.5, keeping every residual's sign stable under +/-epsilon nudges; for
    softmax heads it is cross entropy on random labels.
    """
    rng = np.random.default_rng(seed)
    X = rng.normal(0.0, 1.0, (batch, steps, spec.features))
    params = init_params(spec, seed + 1)

    if spec.head == "softmax":
        labels = rng.integers(0, spec.outputs, batch)

        def loss_of(p):
            outputs, cache = forward(p, spec, X)
            loss, grad = cce_loss(outputs, labels)
            return loss, grad, cache

    else:
        base_outputs, _ = forward(params, spec, X)
        offsets = 0.5 + np.abs(rng.normal(0.0, 1.0, batch))
        signs = np.where(rng.random(batch) < 0.5, -1.0, 1.0)
        targets = base_outputs.reshape(-1) + signs * offsets

        def loss_of(p):
            outputs, cache = forward(p, spec, X)
            loss, grad = mae_loss(outputs, targets)
            return loss, grad, cache

    _, dout, cache = loss_of(params)
    analytic = backward(params, spec, cache, dout)

    worst = 0.0
    worst_param = ""
    coords = 0
    for name, value in params.items():
        flat = value.reshape(-1)
        for i in range(flat.shape[0]):
            saved = flat[i]
            flat[i] = saved + epsilon
            plus, _, _ = loss_of(params)
            flat[i] = saved - epsilon
            minus, _, _ = loss_of(params)
            flat[i] = saved
            numeric = (plus - minus) / (2.0 * epsilon)
            exact = analytic[name].reshape(-1)[i]
            rel = abs(exact - numeric) / max(abs(exact), abs(numeric), 1e-4)
            coords += 1
            if rel > worst:
                worst = rel
                worst_param = name
    return GradCheckResult(max_rel_error=worst, worst_param=worst_param, coordinates=coords)
