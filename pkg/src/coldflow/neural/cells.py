"""Recurrent cell steps, batched, with matching backward passes.

Both cells take the concatenated vector z = [a_prev; x] through a single
weight matrix. The LSTM stacks its four gates row-wise in one matrix, so a
step is one matmul regardless of batch size. Gate row order is candidate,
update, forget, output.
"""

from __future__ import annotations

import numpy as np


def sigmoid(x):
    # tanh-based form stays finite for large |x| without overflow warnings.
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def rnn_forward(W, b, a_prev, x):
    """One tanh-RNN step for a batch.

    a = tanh(W @ [a_prev; x] + b). Returns (a, cache).
    """
    z = np.concatenate([a_prev, x], axis=1)
    a = np.tanh(z @ W.T + b)
    return a, (z, a)


def rnn_backward(W, da, cache):
    """Backward through one RNN step: returns (dW, db, da_prev, dx)."""
    z, a = cache
    H = a.shape[1]
    ds = da * (1.0 - a * a)
    dW = ds.T @ z
    db = ds.sum(axis=0)
    dz = ds @ W
    return dW, db, dz[:, :H], dz[:, H:]


def lstm_forward(W, b, a_prev, c_prev, x):
    """One LSTM step for a batch.

    With z = [a_prev; x] and s = W @ z + b split into four row blocks:

        cand = tanh(s0)        u = sigmoid(s1)
        f    = sigmoid(s2)     o = sigmoid(s3)
        c    = u * cand + f * c_prev
        a    = o * tanh(c)

    Returns (a, c, cache).
    """
    H = a_prev.shape[1]
    z = np.concatenate([a_prev, x], axis=1)
    s = z @ W.T + b
    cand = np.tanh(s[:, :H])
    u = sigmoid(s[:, H : 2 * H])
    f = sigmoid(s[:, 2 * H : 3 * H])
    o = sigmoid(s[:, 3 * H :])
    c = u * cand + f * c_prev
    tc = np.tanh(c)
    a = o * tc
    return a, c, (z, c_prev, cand, u, f, o, tc)


def lstm_backward(W, da, dc_next, cache):
    """Backward through one LSTM step.

    Takes the hidden-state gradient da and the cell-state gradient flowing
    back from the next step. Returns (dW, db, da_prev, dx, dc_prev).
    """
    z, c_prev, cand, u, f, o, tc = cache
    H = cand.shape[1]
    do = da * tc
    dc = dc_next + da * o * (1.0 - tc * tc)
    dcand = dc * u
    du = dc * cand
    df = dc * c_prev
    dc_prev = dc * f
    ds = np.concatenate(
        [
            dcand * (1.0 - cand * cand),
            du * u * (1.0 - u),
            df * f * (1.0 - f),
            do * o * (1.0 - o),
        ],
        axis=1,
    )
    dW = ds.T @ z
    db = ds.sum(axis=0)
    dz = ds @ W
    return dW, db, dz[:, :H], dz[:, H:], dc_prev
