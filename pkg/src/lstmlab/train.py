"""Mini-batch training, evaluation and the four-way comparison protocol."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from . import _kernels
from .data import Dataset
from .lstm import BASELINE, NONLINEAR_GATE, CellVariant, LstmParams, init_params
from .regularization import DEFAULT_A_GRID, DEFAULT_P_GRID, RegSpec, reg_cost_and_grad, sweep_spec
from .reorder import ngram_reorder_indices, reorder_indices
from .seeding import sub_rng

__all__ = [
    "TrainConfig",
    "Metrics",
    "TrainResult",
    "TrainingDiverged",
    "permutation_for",
    "sgd_step",
    "Adam",
    "clip_by_global_norm",
    "evaluate",
    "train_model",
    "ROW_LABELS",
    "COLUMN_LABELS",
    "ComparisonReport",
    "run_comparison",
    "run_sweep",
]

LR_GRID = (0.1, 0.01, 0.001, 0.0001)
PERM_MODES = ("none", "tree", "ngram")


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 0.01
    lr_grid: tuple[float, ...] = LR_GRID
    embedding_dim: int = 100
    hidden_dim: int = 50
    seq_len: int = 32
    batch_size: int = 32
    seed: int = 0
    cell: str = BASELINE
    eq5_literal: bool = False
    perm_mode: str = "none"
    ngram: int = 2
    reg: RegSpec | None = None
    optimizer: str = "sgd"
    clip_norm: float | None = 5.0

    def __post_init__(self):
        for name in ("epochs", "embedding_dim", "hidden_dim", "seq_len", "batch_size"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < (0 if name == "epochs" else 1):
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.perm_mode not in PERM_MODES:
            raise ValueError(f"perm_mode must be one of {PERM_MODES}, got {self.perm_mode!r}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive or None")
        CellVariant(self.cell, self.eq5_literal)

    @property
    def variant(self) -> CellVariant:
        return CellVariant(self.cell, self.eq5_literal)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["lr_grid"] = list(self.lr_grid)
        out["reg"] = None if self.reg is None else self.reg.to_dict()
        return out


@dataclass(frozen=True)
class Metrics:
    split: str
    accuracy: float
    mean_loss: float
    epoch: int = 0

    @property
    def error_rate(self) -> float:
        return 1.0 - self.accuracy

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "split": self.split,
            "accuracy": self.accuracy,
            "mean_loss": self.mean_loss,
            "error_rate": self.error_rate,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass
class TrainResult:
    params: LstmParams
    history: list[Metrics]
    best_epoch: int
    config: TrainConfig

    def at(self, epoch: int, split: str) -> Metrics:
        for m in self.history:
            if m.epoch == epoch and m.split == split:
                return m
        raise KeyError((epoch, split))


def permutation_for(config: TrainConfig) -> np.ndarray | None:
    if config.perm_mode == "none":
        return None
    if config.perm_mode == "tree":
        return np.array(reorder_indices(config.seq_len), dtype=np.int64)
    return np.array(ngram_reorder_indices(config.seq_len, config.ngram), dtype=np.int64)


def sgd_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], lr: float) -> dict[str, np.ndarray]:
    out = {}
    for name, w in params.items():
        g = grads.get(name)
        if g is None:
            out[name] = w
            continue
        if g.shape != w.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, expected {w.shape}")
        out[name] = w - lr * g
    return out


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params, grads):
        self.t += 1
        out = {}
        for name, w in params.items():
            g = grads[name]
            m = self.m.get(name, np.zeros_like(w))
            v = self.v.get(name, np.zeros_like(w))
            m = self.beta1 * m + (1 - self.beta1) * g
            v = self.beta2 * v + (1 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            mhat = m / (1 - self.beta1**self.t)
            vhat = v / (1 - self.beta2**self.t)
            out[name] = w - self.lr * mhat / (np.sqrt(vhat) + self.eps)
        return out


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> tuple[dict[str, np.ndarray], float]:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm <= max_norm or norm == 0.0:
        return grads, norm
    factor = max_norm / norm
    return {k: g * factor for k, g in grads.items()}, norm


def _batched_logits(params: LstmParams, x: np.ndarray, variant: CellVariant, batch_size: int = 256) -> np.ndarray:
    arrays = params.arrays()
    parts = [
        _kernels.forward(x[lo : lo + batch_size], arrays, variant.nonlinear, variant.eq5_literal)
        for lo in range(0, len(x), batch_size)
    ]
    return np.vstack(parts)


def evaluate(
    params: LstmParams,
    dataset: Dataset,
    variant: CellVariant = CellVariant(),
    perm: Sequence[int] | None = None,
    epoch: int = 0,
) -> Metrics:
    """Accuracy (argmax, ties to the lowest class) and mean cross-entropy."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    x, y = dataset.arrays()
    if perm is not None:
        x = x[:, np.asarray(perm)]
    logits = _batched_logits(params, x, variant)
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    mean_loss = float(-logp[np.arange(len(y)), y].mean())
    accuracy = float(np.mean(np.argmax(logits, axis=1) == y))
    return Metrics(dataset.split, accuracy, mean_loss, epoch)


def train_model(
    config: TrainConfig,
    train: Dataset,
    valid: Dataset | None = None,
    *,
    params: LstmParams | None = None,
    on_metrics: Callable[[Metrics], None] | None = None,
) -> TrainResult:
    """Seeded mini-batch training with best-validation checkpoint selection.

    Each epoch shuffles the training order (stream ``"shuffle"``), steps the
    optimizer once per batch on mean cross-entropy plus the weight penalty,
    then evaluates the frozen parameters on ``train`` and ``valid``.  The
    returned params are those of the epoch with the best validation accuracy
    (training accuracy when ``valid`` is None); ties go to the earliest
    epoch, and epoch 0 is the initialization.
    """
    if len(train) == 0:
        raise ValueError("training set is empty")
    if train.seq_len != config.seq_len:
        raise ValueError(f"dataset seq_len {train.seq_len} != config seq_len {config.seq_len}")
    variant = config.variant
    if params is None:
        params = init_params(len(train.vocab), config.embedding_dim, config.hidden_dim,
                             train.num_classes, variant, config.seed)
    perm = permutation_for(config)
    x, y = train.arrays()
    if perm is not None:
        x = x[:, perm]
    arrays = params.arrays()
    shuffle_rng = sub_rng(config.seed, "shuffle")
    adam = Adam(config.learning_rate) if config.optimizer == "adam" else None
    history: list[Metrics] = []

    def record(epoch: int, current: LstmParams) -> float:
        scores = []
        for ds in (train, valid):
            if ds is None:
                continue
            m = evaluate(current, ds, variant, perm, epoch)
            history.append(m)
            scores.append(m.accuracy)
            if on_metrics is not None:
                on_metrics(m)
        return scores[-1]

    best_score = record(0, params)
    best_params, best_epoch = params.copy(), 0
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(len(x))
        for batch_no, lo in enumerate(range(0, len(x), config.batch_size)):
            idx = order[lo : lo + config.batch_size]
            loss, _, grads = _kernels.forward_backward(
                x[idx], y[idx], arrays, variant.nonlinear, variant.eq5_literal
            )
            if config.reg is not None and not config.reg.is_zero:
                penalty, reg_grads = reg_cost_and_grad(arrays, config.reg)
                loss += penalty
                for name, g in reg_grads.items():
                    grads[name] = grads[name] + g
            if not math.isfinite(loss) or not all(np.isfinite(g).all() for g in grads.values()):
                raise TrainingDiverged(
                    f"non-finite loss or gradient at epoch {epoch}, batch {batch_no}"
                )
            if config.clip_norm is not None:
                grads, _ = clip_by_global_norm(grads, config.clip_norm)
            if adam is not None:
                arrays = adam.step(arrays, grads)
            else:
                arrays = sgd_step(arrays, grads, config.learning_rate)
        current = params.replace(arrays)
        score = record(epoch, current)
        if score > best_score:
            best_score, best_params, best_epoch = score, current.copy(), epoch
    return TrainResult(best_params, history, best_epoch, config)


ROW_LABELS = (
    "Baseline (regular LSTM)",
    "Input Reordering",
    "Weight Regularization",
    "Gate Nonlinearization",
)
NGRAM_ROW = "Input Reordering (2-Gram)"
COLUMN_LABELS = ("Training Accuracy", "Testing Accuracy", "Training Error", "Testing Error")
ROW_KEYS = {
    "baseline": ROW_LABELS[0],
    "reorder": ROW_LABELS[1],
    "reorder_ngram": NGRAM_ROW,
    "regularization": ROW_LABELS[2],
    "nonlinear": ROW_LABELS[3],
}
DEFAULT_ROWS = ("baseline", "reorder", "regularization", "nonlinear")


@dataclass
class ComparisonRow:
    key: str
    label: str
    config: TrainConfig
    best_epoch: int
    train: Metrics
    test: Metrics
    valid: Metrics | None = None
    sweep: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {
            "key": self.key,
            "label": self.label,
            "best_epoch": self.best_epoch,
            "config": self.config.to_dict(),
            "train": self.train.to_dict(),
            "test": self.test.to_dict(),
            "valid": None if self.valid is None else self.valid.to_dict(),
        }
        if self.sweep:
            out["sweep"] = self.sweep
        return out


@dataclass
class ComparisonReport:
    rows: list[ComparisonRow]
    dataset: str
    seed: int
    notes: dict = field(default_factory=dict)

    def table(self) -> list[tuple[str, float, float, float, float]]:
        """Rows of (label, train acc %, test acc %, train CE, test CE)."""
        return [
            (r.label, 100 * r.train.accuracy, 100 * r.test.accuracy, r.train.mean_loss, r.test.mean_loss)
            for r in self.rows
        ]

    def render(self) -> str:
        width = max(len(r.label) for r in self.rows)
        head = " | ".join([" " * width, *COLUMN_LABELS])
        lines = [head, "-" * len(head)]
        for label, tr_acc, te_acc, tr_err, te_err in self.table():
            cells = [f"{tr_acc:.1f}", f"{te_acc:.1f}", f"{tr_err:.3f}", f"{te_err:.3f}"]
            cells = [c.rjust(len(h)) for c, h in zip(cells, COLUMN_LABELS)]
            lines.append(" | ".join([label.ljust(width), *cells]))
        lines.append("")
        lines.append("Accuracy in percent. Error columns are mean cross-entropy.")
        lines.append("")
        rate_cols = ("Training Error Rate", "Testing Error Rate")
        lines.append(" | ".join([" " * width, *rate_cols]))
        for r in self.rows:
            cells = [f"{r.train.error_rate:.3f}".rjust(len(rate_cols[0])),
                     f"{r.test.error_rate:.3f}".rjust(len(rate_cols[1]))]
            lines.append(" | ".join([r.label.ljust(width), *cells]))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "seed": self.seed,
            "columns": list(COLUMN_LABELS),
            "error_columns": "mean cross-entropy; error rates under each row's train/test",
            "notes": self.notes,
            "rows": [r.to_dict() for r in self.rows],
        }


def _fit_row(key, config, train, valid, test, on_metrics=None, sweep=None):
    result = train_model(config, train, valid, on_metrics=on_metrics)
    variant = config.variant
    perm = permutation_for(config)
    tr = evaluate(result.params, train, variant, perm, result.best_epoch)
    te = evaluate(result.params, test, variant, perm, result.best_epoch)
    va = None if valid is None else evaluate(result.params, valid, variant, perm, result.best_epoch)
    return ComparisonRow(key, ROW_KEYS[key], config, result.best_epoch, tr, te, va, sweep or [])


def run_sweep(
    base: TrainConfig,
    train: Dataset,
    valid: Dataset,
    specs: Sequence[RegSpec | None] = (None,),
    learning_rates: Sequence[float] | None = None,
) -> list[dict]:
    """Train every (learning rate, penalty) pair; report validation accuracy.

    Entries come back in enumeration order (learning rate outer).
    """
    lrs = [base.learning_rate] if learning_rates is None else list(learning_rates)
    out = []
    for lr in lrs:
        for spec in specs:
            cfg = replace(base, learning_rate=lr, reg=spec)
            result = train_model(cfg, train, valid)
            best = result.at(result.best_epoch, "valid" if valid is not None else "train")
            out.append({
                "learning_rate": lr,
                "reg": None if spec is None else spec.to_dict(),
                "best_epoch": result.best_epoch,
                "valid_accuracy": best.accuracy,
                "valid_loss": best.mean_loss,
            })
    return out


def _best_index(entries: Sequence[dict]) -> int:
    # highest validation accuracy, earliest entry on ties
    best = 0
    for k, e in enumerate(entries):
        if e["valid_accuracy"] > entries[best]["valid_accuracy"]:
            best = k
    return best


def run_comparison(
    base: TrainConfig,
    train: Dataset,
    valid: Dataset,
    test: Dataset,
    *,
    rows: Sequence[str] = DEFAULT_ROWS,
    reg_specs: Sequence[RegSpec] | None = None,
    on_metrics: Callable[[str, Metrics], None] | None = None,
) -> ComparisonReport:
    """Train the requested rows from one base config and tabulate them.

    ``baseline`` uses ``base`` unchanged (perm_mode none, no penalty,
    baseline cell); ``reorder`` switches on the tree permutation;
    ``reorder_ngram`` the 2-gram permutation; ``regularization`` sweeps
    ``reg_specs`` (default: tied grid) and keeps the best on validation;
    ``nonlinear`` uses the gate-nonlinearized cell.
    """
    unknown = [r for r in rows if r not in ROW_KEYS]
    if unknown:
        raise ValueError(f"unknown comparison rows: {', '.join(unknown)}; have {', '.join(ROW_KEYS)}")
    plain = replace(base, cell=BASELINE, perm_mode="none", reg=None)
    report_rows = []
    for key in rows:
        emit = None if on_metrics is None else (lambda m, key=key: on_metrics(key, m))
        sweep = None
        if key == "baseline":
            cfg = plain
        elif key == "reorder":
            cfg = replace(plain, perm_mode="tree")
        elif key == "reorder_ngram":
            cfg = replace(plain, perm_mode="ngram", ngram=2)
        elif key == "nonlinear":
            cfg = replace(plain, cell=NONLINEAR_GATE)
        else:
            specs = list(reg_specs) if reg_specs is not None else sweep_spec(DEFAULT_A_GRID, DEFAULT_P_GRID)
            sweep = run_sweep(plain, train, valid, specs)
            cfg = replace(plain, reg=specs[_best_index(sweep)])
        report_rows.append(_fit_row(key, cfg, train, valid, test, emit, sweep))
    notes = {
        "clip_norm": base.clip_norm,
        "optimizer": base.optimizer,
        "kernel_backend": _kernels.backend_name(),
        "model_selection": "best validation accuracy, earliest epoch on ties",
    }
    return ComparisonReport(report_rows, train.name, base.seed, notes)
