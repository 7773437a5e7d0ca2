"""LSTM cells, sequence unrolling and a linear classification head.

Two gate parameterizations share one state update:

* ``baseline``: ``gate = act(x U + h W)``
* ``nonlinear_gate``: ``gate = act(relu(x U) M + relu(h W) N)`` with one
  extra pair of square matrices per gate, ``(A, B)`` for the input gate,
  ``(C, D)`` forget, ``(E, F)`` output and ``(G, H)`` candidate.

The cell update is ``c = f * c_prev + i * g`` by default; with
``eq5_literal`` it becomes ``c = sigmoid(f * c_prev + i * g)``.  Gates carry
no bias.

Functions here run on an :class:`~lstmlab.autodiff.Tape` and serve as the
reference route.  Training goes through the fused kernels in
:mod:`lstmlab._kernels`, which are checked against these.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .reorder import apply_permutation, is_permutation

__all__ = [
    "GATES",
    "BASE_MATRICES",
    "EXTRA_MATRICES",
    "GATE_PAIRS",
    "CellVariant",
    "CellState",
    "LstmParams",
    "NonlinearGateParams",
    "init_params",
    "bind",
    "baseline_step",
    "nonlinear_gate_step",
    "cell_step",
    "run_sequence",
    "loss",
    "sequence_loss",
    "save_checkpoint",
    "load_checkpoint",
]

GATES = ("i", "f", "o", "g")
BASE_MATRICES = ("U_i", "U_f", "U_o", "U_g", "W_i", "W_f", "W_o", "W_g")
EXTRA_MATRICES = ("A", "B", "C", "D", "E", "F", "G", "H")
# (input-path matrix, state-path matrix) per gate
GATE_PAIRS = {"i": ("A", "B"), "f": ("C", "D"), "o": ("E", "F"), "g": ("G", "H")}

BASELINE = "baseline"
NONLINEAR_GATE = "nonlinear_gate"


@dataclass(frozen=True)
class CellVariant:
    kind: str = BASELINE
    eq5_literal: bool = False

    def __post_init__(self):
        if self.kind not in (BASELINE, NONLINEAR_GATE):
            raise ValueError(f"unknown cell kind {self.kind!r}")

    @property
    def nonlinear(self) -> bool:
        return self.kind == NONLINEAR_GATE


@dataclass
class CellState:
    h: ad.Node
    c: ad.Node


@dataclass
class LstmParams:
    """Embedding, the eight recurrent matrices and the classifier head."""

    embedding: np.ndarray  # vocab_size x embedding_dim
    U_i: np.ndarray
    U_f: np.ndarray
    U_o: np.ndarray
    U_g: np.ndarray
    W_i: np.ndarray
    W_f: np.ndarray
    W_o: np.ndarray
    W_g: np.ndarray
    V: np.ndarray  # hidden_dim x num_classes
    b: np.ndarray  # 1 x num_classes

    def __post_init__(self):
        for f in fields(self):
            setattr(self, f.name, np.asarray(getattr(self, f.name), dtype=np.float64))
        self.validate()

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[0]

    @property
    def embedding_dim(self) -> int:
        return self.embedding.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W_i.shape[0]

    @property
    def num_classes(self) -> int:
        return self.V.shape[1]

    def shapes(self) -> dict[str, tuple[int, int]]:
        e, m, k = self.embedding_dim, self.hidden_dim, self.num_classes
        out = {"embedding": (self.vocab_size, e), "V": (m, k), "b": (1, k)}
        out.update({name: (e, m) for name in BASE_MATRICES[:4]})
        out.update({name: (m, m) for name in BASE_MATRICES[4:]})
        return out

    def validate(self) -> None:
        for name, shape in self.shapes().items():
            actual = getattr(self, name).shape
            if actual != shape:
                raise ValueError(f"{name} has shape {actual}, expected {shape}")

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def copy(self):
        return type(self)(**{k: v.copy() for k, v in self.arrays().items()})

    def replace(self, arrays: Mapping[str, np.ndarray]):
        merged = self.arrays()
        merged.update(arrays)
        return type(self)(**merged)


@dataclass
class NonlinearGateParams(LstmParams):
    A: np.ndarray = field(default=None)
    B: np.ndarray = field(default=None)
    C: np.ndarray = field(default=None)
    D: np.ndarray = field(default=None)
    E: np.ndarray = field(default=None)
    F: np.ndarray = field(default=None)
    G: np.ndarray = field(default=None)
    H: np.ndarray = field(default=None)

    def __post_init__(self):
        for name in EXTRA_MATRICES:
            if getattr(self, name) is None:
                raise ValueError(f"missing gate matrix {name}")
        super().__post_init__()

    def shapes(self) -> dict[str, tuple[int, int]]:
        out = super().shapes()
        m = self.hidden_dim
        out.update({name: (m, m) for name in EXTRA_MATRICES})
        return out

    @classmethod
    def from_baseline(cls, base: LstmParams, extra: Mapping[str, np.ndarray]):
        return cls(**base.arrays(), **{k: extra[k] for k in EXTRA_MATRICES})


def _rng(seed, name: str) -> np.random.Generator:
    from .seeding import sub_rng

    return sub_rng(seed, "init/" + name)


def init_params(
    vocab_size: int,
    embedding_dim: int,
    hidden_dim: int,
    num_classes: int,
    variant: CellVariant = CellVariant(),
    seed: int = 0,
    extra_noise: float = 0.01,
) -> LstmParams:
    """Seeded initialization.

    Gate matrices are uniform in ``+-1/sqrt(fan_in)``, the embedding is
    standard normal, the head bias is zero and ``A..H`` start at the identity
    plus ``extra_noise``-scaled Gaussian noise.  Each matrix draws from its
    own named stream, so baseline and nonlinear models built from one seed
    share every common matrix.
    """
    e, m, k = embedding_dim, hidden_dim, num_classes
    arrays = {"embedding": _rng(seed, "embedding").standard_normal((vocab_size, e))}
    for name in BASE_MATRICES:
        fan_in = e if name.startswith("U") else m
        bound = 1.0 / np.sqrt(fan_in)
        rows = e if name.startswith("U") else m
        arrays[name] = _rng(seed, name).uniform(-bound, bound, (rows, m))
    bound = 1.0 / np.sqrt(m)
    arrays["V"] = _rng(seed, "V").uniform(-bound, bound, (m, k))
    arrays["b"] = np.zeros((1, k))
    if not variant.nonlinear:
        return LstmParams(**arrays)
    for name in EXTRA_MATRICES:
        arrays[name] = np.eye(m) + extra_noise * _rng(seed, name).standard_normal((m, m))
    return NonlinearGateParams(**arrays)


def bind(params: LstmParams, tape: ad.Tape) -> dict[str, ad.Node]:
    """Register every parameter array as a leaf node on ``tape``."""
    return {name: tape.param(value, name=name) for name, value in params.arrays().items()}


def _finish(gates: dict[str, ad.Node], state: CellState, variant: CellVariant) -> CellState:
    i = ad.sigmoid(gates["i"])
    f = ad.sigmoid(gates["f"])
    o = ad.sigmoid(gates["o"])
    g = ad.tanh_act(gates["g"])
    c = ad.add(ad.hadamard(f, state.c), ad.hadamard(i, g))
    if variant.eq5_literal:
        c = ad.sigmoid(c)
    h = ad.hadamard(ad.tanh_act(c), o)
    return CellState(h=h, c=c)


def _check_step_shapes(x: ad.Node, state: CellState, p: Mapping[str, ad.Node]) -> None:
    rows, e = x.shape
    m = p["W_i"].shape[0]
    if p["U_i"].shape != (e, m):
        raise ValueError(f"input has width {e} but U_i is {p['U_i'].shape}")
    if state.h.shape != (rows, m) or state.c.shape != (rows, m):
        raise ValueError(f"state shapes {state.h.shape}/{state.c.shape}, expected {(rows, m)}")


def baseline_step(x: ad.Node, state: CellState, p: Mapping[str, ad.Node], variant: CellVariant) -> CellState:
    if variant.nonlinear:
        raise ValueError("baseline_step called with a nonlinear_gate variant")
    _check_step_shapes(x, state, p)
    gates = {
        k: ad.add(ad.matmul(x, p["U_" + k]), ad.matmul(state.h, p["W_" + k])) for k in GATES
    }
    return _finish(gates, state, variant)


def nonlinear_gate_step(
    x: ad.Node, state: CellState, p: Mapping[str, ad.Node], variant: CellVariant
) -> CellState:
    if not variant.nonlinear:
        raise ValueError("nonlinear_gate_step called with a baseline variant")
    _check_step_shapes(x, state, p)
    gates = {}
    for k in GATES:
        mx, mh = GATE_PAIRS[k]
        from_x = ad.matmul(ad.relu(ad.matmul(x, p["U_" + k])), p[mx])
        from_h = ad.matmul(ad.relu(ad.matmul(state.h, p["W_" + k])), p[mh])
        gates[k] = ad.add(from_x, from_h)
    return _finish(gates, state, variant)


def cell_step(x, state, p, variant: CellVariant) -> CellState:
    step = nonlinear_gate_step if variant.nonlinear else baseline_step
    return step(x, state, p, variant)


def zero_state(tape: ad.Tape, rows: int, hidden_dim: int) -> CellState:
    return CellState(
        h=tape.const(np.zeros((rows, hidden_dim))), c=tape.const(np.zeros((rows, hidden_dim)))
    )


def run_sequence(
    token_ids,
    p: Mapping[str, ad.Node],
    variant: CellVariant,
    perm: Sequence[int] | None = None,
) -> ad.Node:
    """Unroll the cell over ``token_ids`` and return the head's logits.

    ``token_ids`` is one sequence (length L) or a batch (``B x L``); rows of
    the result are per-sequence logits.  ``perm`` reorders the time axis
    before feeding: step ``t`` sees token ``perm[t]``.
    """
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim == 1:
        ids = ids[None, :]
    if ids.ndim != 2 or ids.shape[1] == 0:
        raise ValueError("token_ids must be a non-empty sequence or batch of sequences")
    vocab = p["embedding"].shape[0]
    if ids.min() < 0 or ids.max() >= vocab:
        raise ValueError(f"token id out of range for vocabulary of size {vocab}")
    if perm is not None:
        if not is_permutation(perm, ids.shape[1]):
            raise ValueError(f"perm is not a permutation of 0..{ids.shape[1] - 1}")
        ids = np.array([apply_permutation(list(row), perm) for row in ids], dtype=np.int64)
    tape = p["embedding"].tape
    state = zero_state(tape, ids.shape[0], p["W_i"].shape[0])
    for t in range(ids.shape[1]):
        x = ad.row_select(p["embedding"], ids[:, t])
        state = cell_step(x, state, p, variant)
    bias = ad.row_select(p["b"], np.zeros(ids.shape[0], dtype=np.int64))
    return ad.add(ad.matmul(state.h, p["V"]), bias)


def loss(logits: ad.Node, label, p: Mapping[str, ad.Node] | None = None, reg=None) -> ad.Node:
    """Mean softmax cross-entropy, plus the weight penalty when ``reg`` is set."""
    data = ad.softmax_cross_entropy(logits, label)
    if reg is None:
        return data
    from .regularization import reg_cost_node

    penalty = reg_cost_node(p, reg)
    return data if penalty is None else ad.add(data, penalty)


def sequence_loss(
    token_ids,
    labels,
    params: LstmParams | Mapping[str, np.ndarray],
    variant: CellVariant,
    perm: Sequence[int] | None = None,
    reg=None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and gradients for one batch through the tape."""
    arrays = params.arrays() if isinstance(params, LstmParams) else dict(params)
    tape = ad.Tape()
    p = {name: tape.param(value, name=name) for name, value in arrays.items()}
    out = loss(run_sequence(token_ids, p, variant, perm), labels, p, reg)
    tape.backward(out)
    return float(out.value[0, 0]), {name: node.grad.copy() for name, node in p.items()}


CHECKPOINT_FORMAT = "lstmlab-checkpoint/1"


def save_checkpoint(path, params: LstmParams, variant: CellVariant, meta: Mapping | None = None) -> None:
    """Write an ``.npz`` archive of little-endian float64 arrays.

    The archive holds one ``.npy`` member per matrix plus ``__meta__``, a
    JSON string with the format tag, variant flags, shapes and ``meta``.
    """
    arrays = {k: np.ascontiguousarray(v, dtype="<f8") for k, v in params.arrays().items()}
    header = {
        "format": CHECKPOINT_FORMAT,
        "kind": variant.kind,
        "eq5_literal": variant.eq5_literal,
        "shapes": {k: list(v.shape) for k, v in arrays.items()},
        "meta": dict(meta or {}),
    }
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(header, sort_keys=True)), **arrays)


def load_checkpoint(path) -> tuple[LstmParams, CellVariant, dict]:
    with np.load(Path(path), allow_pickle=False) as archive:
        header = json.loads(str(archive["__meta__"]))
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
        arrays = {k: archive[k].astype(np.float64) for k in header["shapes"]}
    variant = CellVariant(kind=header["kind"], eq5_literal=header["eq5_literal"])
    cls = NonlinearGateParams if variant.nonlinear else LstmParams
    return cls(**arrays), variant, header["meta"]
