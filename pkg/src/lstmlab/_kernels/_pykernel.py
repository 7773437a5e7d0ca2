"""NumPy implementation of the fused batch kernels.

Gate blocks are packed in ``i, f, o, g`` order: ``U = [U_i U_f U_o U_g]``
(``E x 4H``) and likewise ``W``.  The Cython module exposes the same two
functions with identical semantics.
"""

from __future__ import annotations

import numpy as np

NAME = "python"

_PAIRS = (("A", "B"), ("C", "D"), ("E", "F"), ("G", "H"))


def _sigmoid(x):
    # exp of a non-positive argument only
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _pack(arrays):
    U = np.hstack([arrays["U_i"], arrays["U_f"], arrays["U_o"], arrays["U_g"]])
    W = np.hstack([arrays["W_i"], arrays["W_f"], arrays["W_o"], arrays["W_g"]])
    return U, W


def _unroll(tokens, arrays, nonlinear, literal, keep):
    emb = arrays["embedding"]
    U, W = _pack(arrays)
    n, steps = tokens.shape
    m = W.shape[0]
    h = np.zeros((n, m))
    c = np.zeros((n, m))
    cache = []
    for t in range(steps):
        x = emb[tokens[:, t]]
        px = x @ U
        ph = h @ W
        if nonlinear:
            rx = np.maximum(px, 0.0)
            rh = np.maximum(ph, 0.0)
            z = np.empty_like(px)
            for k, (mx, mh) in enumerate(_PAIRS):
                sl = slice(k * m, (k + 1) * m)
                z[:, sl] = rx[:, sl] @ arrays[mx] + rh[:, sl] @ arrays[mh]
        else:
            z = px + ph
        i = _sigmoid(z[:, :m])
        f = _sigmoid(z[:, m : 2 * m])
        o = _sigmoid(z[:, 2 * m : 3 * m])
        g = np.tanh(z[:, 3 * m :])
        c_new = f * c + i * g
        if literal:
            c_new = _sigmoid(c_new)
        tc = np.tanh(c_new)
        h_new = tc * o
        if keep:
            cache.append((x, h, c, i, f, o, g, c_new, tc, px, ph))
        h, c = h_new, c_new
    logits = h @ arrays["V"] + arrays["b"]
    return logits, h, cache, U, W


def forward(tokens, arrays, nonlinear=False, literal=False):
    tokens = np.ascontiguousarray(tokens, dtype=np.int64)
    return _unroll(tokens, arrays, nonlinear, literal, keep=False)[0]


def forward_backward(tokens, labels, arrays, nonlinear=False, literal=False):
    """Mean cross-entropy over the batch, logits, and gradients of every array."""
    tokens = np.ascontiguousarray(tokens, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    logits, h_last, cache, U, W = _unroll(tokens, arrays, nonlinear, literal, keep=True)
    n, steps = tokens.shape
    m = W.shape[0]
    rows = np.arange(n)

    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -logp[rows, labels].mean()
    dlogits = np.exp(logp)
    dlogits[rows, labels] -= 1.0
    dlogits /= n

    grads = {name: np.zeros_like(v) for name, v in arrays.items()}
    grads["V"] = h_last.T @ dlogits
    grads["b"] = dlogits.sum(axis=0, keepdims=True)
    dU = np.zeros_like(U)
    dW = np.zeros_like(W)
    dh = dlogits @ arrays["V"].T
    dc = np.zeros((n, m))
    dz = np.empty((n, 4 * m))
    for t in range(steps - 1, -1, -1):
        x, h_prev, c_prev, i, f, o, g, c, tc, px, ph = cache[t]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        if literal:
            dc = dc * c * (1.0 - c)
        dz[:, :m] = dc * g * i * (1.0 - i)
        dz[:, m : 2 * m] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * m : 3 * m] = do * o * (1.0 - o)
        dz[:, 3 * m :] = dc * i * (1.0 - g * g)
        if nonlinear:
            dpx = np.empty_like(dz)
            dph = np.empty_like(dz)
            for k, (mx, mh) in enumerate(_PAIRS):
                sl = slice(k * m, (k + 1) * m)
                rx = np.maximum(px[:, sl], 0.0)
                rh = np.maximum(ph[:, sl], 0.0)
                grads[mx] += rx.T @ dz[:, sl]
                grads[mh] += rh.T @ dz[:, sl]
                dpx[:, sl] = (dz[:, sl] @ arrays[mx].T) * (px[:, sl] > 0)
                dph[:, sl] = (dz[:, sl] @ arrays[mh].T) * (ph[:, sl] > 0)
        else:
            dpx = dph = dz
        dU += x.T @ dpx
        dW += h_prev.T @ dph
        np.add.at(grads["embedding"], tokens[:, t], dpx @ U.T)
        dh = dph @ W.T
        dc = dc * f
    for k, gate in enumerate("ifog"):
        grads["U_" + gate] = dU[:, k * m : (k + 1) * m].copy()
        grads["W_" + gate] = dW[:, k * m : (k + 1) * m].copy()
    return float(loss), logits, grads
