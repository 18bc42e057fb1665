"""Stacked many-to-one recurrent networks.

Layers run bottom to top at each time step; only the top layer's final
hidden state feeds the head, a single affine map whose outputs are read as
raw values (regression) or as logits (classification). Parameters live in
a flat {name: float64 array} dict so the optimizer, the gradient checker
and the serializer can treat every model identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from coldflow.neural.cells import lstm_backward, lstm_forward, rnn_backward, rnn_forward

CELLS = ("rnn", "lstm")
HEADS = ("linear", "softmax")


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description, enough to rebuild parameter shapes."""

    cell: str
    layers: int
    hidden: int
    features: int
    outputs: int
    head: str

    def __post_init__(self):
        if self.cell not in CELLS:
            raise ValueError(f"cell must be one of {CELLS}, got {self.cell!r}")
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}, got {self.head!r}")
        if min(self.layers, self.hidden, self.features, self.outputs) < 1:
            raise ValueError("layers, hidden, features and outputs must be >= 1")


def _layer_param_names(spec: NetworkSpec, layer: int):
    return f"{spec.cell}{layer}_W", f"{spec.cell}{layer}_b"


def init_params(spec: NetworkSpec, seed: int) -> dict:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases.

    LSTM forget-gate biases start at +1 so cell state flows freely early in
    training.
    """
    rng = np.random.default_rng(seed)
    gates = 4 if spec.cell == "lstm" else 1
    params: dict[str, np.ndarray] = {}
    for layer in range(spec.layers):
        fan_in = spec.hidden + (spec.features if layer == 0 else spec.hidden)
        scale = 1.0 / np.sqrt(fan_in)
        w_name, b_name = _layer_param_names(spec, layer)
        params[w_name] = rng.uniform(-scale, scale, (gates * spec.hidden, fan_in))
        params[b_name] = np.zeros(gates * spec.hidden)
        if spec.cell == "lstm":
            params[b_name][2 * spec.hidden : 3 * spec.hidden] = 1.0
    scale = 1.0 / np.sqrt(spec.hidden)
    params["head_W"] = rng.uniform(-scale, scale, (spec.outputs, spec.hidden))
    params["head_b"] = np.zeros(spec.outputs)
    return params


def forward(params: dict, spec: NetworkSpec, X: np.ndarray):
    """Run a [batch, time, features] block; returns (outputs, cache).

    Outputs are [batch, spec.outputs]: raw head values, softmax not applied.
    """
    B, T, F = X.shape
    if F != spec.features:
        raise ValueError(f"expected {spec.features} features, got {F}")
    H = spec.hidden
    a = [np.zeros((B, H)) for _ in range(spec.layers)]
    c = [np.zeros((B, H)) for _ in range(spec.layers)]
    caches = [[None] * T for _ in range(spec.layers)]
    for t in range(T):
        inp = X[:, t, :]
        for layer in range(spec.layers):
            w_name, b_name = _layer_param_names(spec, layer)
            if spec.cell == "rnn":
                a[layer], caches[layer][t] = rnn_forward(
                    params[w_name], params[b_name], a[layer], inp
                )
            else:
                a[layer], c[layer], caches[layer][t] = lstm_forward(
                    params[w_name], params[b_name], a[layer], c[layer], inp
                )
            inp = a[layer]
    outputs = a[-1] @ params["head_W"].T + params["head_b"]
    return outputs, {"caches": caches, "a_last": a[-1], "B": B, "T": T}


def backward(params: dict, spec: NetworkSpec, cache: dict, doutputs: np.ndarray) -> dict:
    """Backpropagation through time; returns grads keyed like params.

    Layer-major: the top layer unrolls backward over all steps first, and
    the dx it emits at each step becomes the hidden-state injection for the
    layer below. The head contributes only at the final step.
    """
    caches, a_last = cache["caches"], cache["a_last"]
    B, T = cache["B"], cache["T"]
    H = spec.hidden
    grads = {
        "head_W": doutputs.T @ a_last,
        "head_b": doutputs.sum(axis=0),
    }
    inject: list[list] = [[None] * T for _ in range(spec.layers)]
    inject[spec.layers - 1][T - 1] = doutputs @ params["head_W"]

    for layer in range(spec.layers - 1, -1, -1):
        w_name, b_name = _layer_param_names(spec, layer)
        W = params[w_name]
        dW_total = np.zeros_like(W)
        db_total = np.zeros_like(params[b_name])
        da_rec = np.zeros((B, H))
        dc_rec = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            da = da_rec if inject[layer][t] is None else da_rec + inject[layer][t]
            if spec.cell == "rnn":
                dW, db, da_rec, dx = rnn_backward(W, da, caches[layer][t])
            else:
                dW, db, da_rec, dx, dc_rec = lstm_backward(W, da, dc_rec, caches[layer][t])
            dW_total += dW
            db_total += db
            if layer > 0:
                inject[layer - 1][t] = dx
        grads[w_name] = dW_total
        grads[b_name] = db_total
    return grads
