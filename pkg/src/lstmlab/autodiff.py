"""A small reverse-mode differentiation tape over dense float64 matrices.

Only the operations the LSTM variants and the Lp penalty need are provided.
Every value is a 2-D ``float64`` array; scalars are ``1 x 1``.

    >>> tape = Tape()
    >>> w = tape.param([[3.0]])
    >>> loss = sum_all(hadamard(w, w))
    >>> tape.backward(loss)
    >>> w.grad
    array([[6.]])
"""

from __future__ import annotations

from typing import Callable, Iterable, Mapping

import numpy as np

__all__ = [
    "Tape",
    "Node",
    "GradientStateError",
    "matmul",
    "add",
    "hadamard",
    "scale",
    "sigmoid",
    "tanh_act",
    "relu",
    "concat_rows",
    "row_select",
    "sum_all",
    "abs_pow_sum",
    "power",
    "softmax_cross_entropy",
    "stable_sigmoid",
    "log_softmax",
    "finite_diff_check",
]


class GradientStateError(RuntimeError):
    """Raised when backward is run twice on a tape without ``zero_grad``."""


def _as_matrix(value) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ValueError(f"matrices must be at most 2-D, got shape {arr.shape}")
    return arr


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


class Node:
    __slots__ = ("tape", "value", "grad", "parents", "backward_fn", "name", "index")

    def __init__(self, tape: "Tape", value: np.ndarray, parents=(), backward_fn=None, name=None):
        self.tape = tape
        self.value = value
        self.grad = np.zeros_like(value)
        self.parents = parents
        self.backward_fn = backward_fn
        self.name = name
        self.index = len(tape.nodes)

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"<Node{label} #{self.index} shape={self.value.shape}>"


class Tape:
    """Records nodes in creation order; ``backward`` sweeps them in reverse."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self._swept = False

    def _push(self, value, parents=(), backward_fn=None, name=None) -> Node:
        for p in parents:
            if p.tape is not self:
                raise ValueError("operands belong to different tapes")
        node = Node(self, value, parents, backward_fn, name)
        self.nodes.append(node)
        return node

    def param(self, value, name: str | None = None) -> Node:
        return self._push(_as_matrix(value), name=name)

    const = param

    def zero_grad(self) -> None:
        for node in self.nodes:
            node.grad.fill(0.0)
        self._swept = False

    def backward(self, loss: Node) -> None:
        if loss.tape is not self:
            raise ValueError("loss node belongs to a different tape")
        if loss.value.shape != (1, 1):
            raise ValueError(f"backward needs a scalar loss, got shape {loss.value.shape}")
        if self._swept:
            raise GradientStateError("backward already ran on this tape; call zero_grad() first")
        self._swept = True
        loss.grad += 1.0
        for node in reversed(self.nodes[: loss.index + 1]):
            if node.backward_fn is not None and node.grad.any():
                node.backward_fn(node.grad)


def _same_shape(a: Node, b: Node, op: str) -> None:
    if a.value.shape != b.value.shape:
        raise ValueError(f"{op}: shape mismatch {a.value.shape} vs {b.value.shape}")


def matmul(a: Node, b: Node) -> Node:
    if a.value.shape[1] != b.value.shape[0]:
        raise ValueError(f"matmul: cannot multiply {a.value.shape} by {b.value.shape}")

    def back(g):
        a.grad += g @ b.value.T
        b.grad += a.value.T @ g

    return a.tape._push(a.value @ b.value, (a, b), back)


def add(a: Node, b: Node) -> Node:
    _same_shape(a, b, "add")

    def back(g):
        a.grad += g
        b.grad += g

    return a.tape._push(a.value + b.value, (a, b), back)


def hadamard(a: Node, b: Node) -> Node:
    _same_shape(a, b, "hadamard")

    def back(g):
        a.grad += g * b.value
        b.grad += g * a.value

    return a.tape._push(a.value * b.value, (a, b), back)


def scale(a: Node, c: float) -> Node:
    c = float(c)

    def back(g):
        a.grad += c * g

    return a.tape._push(c * a.value, (a,), back)


def sigmoid(a: Node) -> Node:
    out = stable_sigmoid(a.value)

    def back(g):
        a.grad += g * out * (1.0 - out)

    return a.tape._push(out, (a,), back)


def tanh_act(a: Node) -> Node:
    out = np.tanh(a.value)

    def back(g):
        a.grad += g * (1.0 - out * out)

    return a.tape._push(out, (a,), back)


def relu(a: Node) -> Node:
    # derivative at exactly 0 is taken as 0
    mask = a.value > 0

    def back(g):
        a.grad += g * mask

    return a.tape._push(np.where(mask, a.value, 0.0), (a,), back)


def concat_rows(nodes: Iterable[Node]) -> Node:
    nodes = list(nodes)
    if not nodes:
        raise ValueError("concat_rows needs at least one operand")
    cols = {n.value.shape[1] for n in nodes}
    if len(cols) != 1:
        raise ValueError(f"concat_rows: column counts differ {sorted(cols)}")
    bounds = np.cumsum([0] + [n.value.shape[0] for n in nodes])

    def back(g):
        for n, lo, hi in zip(nodes, bounds[:-1], bounds[1:]):
            n.grad += g[lo:hi]

    return nodes[0].tape._push(np.vstack([n.value for n in nodes]), tuple(nodes), back)


def row_select(a: Node, rows) -> Node:
    """Gather rows of ``a`` (an embedding lookup); repeated rows accumulate."""
    idx = np.atleast_1d(np.asarray(rows, dtype=np.int64))
    n_rows = a.value.shape[0]
    if idx.size == 0 or idx.min() < 0 or idx.max() >= n_rows:
        raise ValueError(f"row_select: indices must lie in [0, {n_rows})")

    def back(g):
        np.add.at(a.grad, idx, g)

    return a.tape._push(a.value[idx], (a,), back)


def sum_all(a: Node) -> Node:
    def back(g):
        a.grad += g[0, 0]

    return a.tape._push(np.array([[a.value.sum()]]), (a,), back)


def abs_pow_sum(a: Node, p: float, eps: float = 0.0) -> Node:
    """``sum((a**2 + eps) ** (p / 2))``, the eps-smoothed sum of ``|a|**p``."""
    if p <= 0:
        raise ValueError(f"exponent p must be positive, got {p}")
    if eps < 0:
        raise ValueError(f"eps must be non-negative, got {eps}")
    sq = a.value * a.value + eps
    total = np.array([[np.sum(sq ** (p / 2.0))]])

    def back(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            d = p * a.value * sq ** (p / 2.0 - 1.0)
        # at an exact zero with eps == 0 the subgradient 0 is used
        d = np.where(sq == 0.0, 0.0, d)
        a.grad += g[0, 0] * d

    return a.tape._push(total, (a,), back)


def power(a: Node, q: float) -> Node:
    """Elementwise ``a ** q`` for non-negative ``a``."""
    q = float(q)
    if np.any(a.value < 0):
        raise ValueError("power: base must be non-negative")
    out = a.value**q

    def back(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            d = q * a.value ** (q - 1.0)
        a.grad += g * np.where(a.value == 0.0, 0.0, d)

    return a.tape._push(out, (a,), back)


def softmax_cross_entropy(logits: Node, label) -> Node:
    """Mean cross-entropy of the rows of ``logits`` against integer labels."""
    labels = np.atleast_1d(np.asarray(label, dtype=np.int64))
    n, k = logits.value.shape
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got {labels.shape[0]}")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must lie in [0, {k})")
    logp = log_softmax(logits.value)
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()

    def back(g):
        d = np.exp(logp)
        d[rows, labels] -= 1.0
        logits.grad += g[0, 0] * d / n

    return logits.tape._push(np.array([[loss]]), (logits,), back)


def finite_diff_check(
    loss_fn: Callable[[Mapping[str, np.ndarray]], tuple[float, Mapping[str, np.ndarray]]],
    params: Mapping[str, np.ndarray],
    h: float = 1e-5,
    *,
    mask: Mapping[str, np.ndarray] | None = None,
    kink_tol: float = 1e-3,
) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    ``loss_fn(params)`` returns ``(loss, grads)``; only its loss is used at the
    perturbed points.  The gap for one entry is
    ``|analytic - numeric| / max(1, |analytic|, |numeric|)``.

    Entries are skipped when ``mask`` marks them False, or when the two
    one-sided slopes disagree by more than ``kink_tol`` (a ReLU kink or
    another non-smooth point lies within ``h``).
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    base = {k: np.array(v, dtype=np.float64, copy=True) for k, v in params.items()}
    f0, grads = loss_fn(base)
    f0 = float(f0)
    worst = 0.0
    for name, value in base.items():
        analytic = np.asarray(grads[name], dtype=np.float64)
        keep = None if mask is None or name not in mask else np.asarray(mask[name], bool)
        for idx in np.ndindex(value.shape):
            if keep is not None and not keep[idx]:
                continue
            orig = value[idx]
            value[idx] = orig + h
            f_plus = float(loss_fn(base)[0])
            value[idx] = orig - h
            f_minus = float(loss_fn(base)[0])
            value[idx] = orig
            fwd = (f_plus - f0) / h
            bwd = (f0 - f_minus) / h
            if abs(fwd - bwd) > kink_tol * max(1.0, abs(fwd), abs(bwd)):
                continue
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = float(analytic[idx])
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, err)
    return worst
