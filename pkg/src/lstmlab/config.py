"""Strict JSON experiment configuration.

Top-level keys: ``name``, ``seed``, ``output_dir``, ``data``, ``train``,
``reg``, ``sweep``, ``compare``.  Unknown keys at any level are errors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from . import data as D
from .regularization import DEFAULT_A_GRID, DEFAULT_EPS, DEFAULT_P_GRID, RegSpec, sweep_spec
from .train import DEFAULT_ROWS, ROW_KEYS, TrainConfig

__all__ = ["ConfigError", "DataConfig", "SweepConfig", "ExperimentConfig", "load_config", "load_datasets"]


class ConfigError(ValueError):
    pass


def _strict(section: str, raw: Any, allowed) -> dict:
    if not isinstance(raw, Mapping):
        raise ConfigError(f"{section}: expected an object")
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        where = f"{section}." if section else ""
        raise ConfigError(f"unknown key {where}{unknown[0]}")
    return dict(raw)


@dataclass(frozen=True)
class DataConfig:
    kind: str = "synth"
    path: str | None = None
    test_path: str | None = None
    min_count: int = 2
    valid_fraction: float = 0.10
    test_fraction: float = 0.20
    n_train: int = 500
    n_test: int = 200
    vocab_size: int = 16
    signal_pos: int = 24
    num_classes: int = 2

    def __post_init__(self):
        if self.kind not in ("synth", "r8", "affr"):
            raise ConfigError(f"data.kind must be synth, r8 or affr, got {self.kind!r}")
        if self.kind != "synth" and not self.path:
            raise ConfigError(f"data.path is required for kind {self.kind!r}")


@dataclass(frozen=True)
class SweepConfig:
    learning_rates: tuple[float, ...] | None = None
    a_grid: tuple[float, ...] = DEFAULT_A_GRID
    p_grid: tuple[float, ...] = DEFAULT_P_GRID
    tied: bool = True
    eps: float = DEFAULT_EPS

    def specs(self) -> list[RegSpec]:
        try:
            return sweep_spec(self.a_grid, self.p_grid, tied=self.tied, eps=self.eps)
        except ValueError as exc:
            raise ConfigError(f"sweep: {exc}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    seed: int = 0
    output_dir: str | None = None
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    rows: tuple[str, ...] = DEFAULT_ROWS

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=seed, train=replace(self.train, seed=seed))

    def to_dict(self) -> dict:
        train = self.train.to_dict()
        reg = train.pop("reg")
        train.pop("seed")
        sweep = {f.name: getattr(self.sweep, f.name) for f in fields(self.sweep)}
        for k in ("learning_rates", "a_grid", "p_grid"):
            if sweep[k] is not None:
                sweep[k] = list(sweep[k])
        return {
            "name": self.name,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "data": {f.name: getattr(self.data, f.name) for f in fields(self.data)},
            "train": train,
            "reg": reg,
            "sweep": sweep,
            "compare": {"rows": list(self.rows)},
        }


_TOP = ("name", "seed", "output_dir", "data", "train", "reg", "sweep", "compare")
_TRAIN_KEYS = tuple(f.name for f in fields(TrainConfig) if f.name not in ("seed", "reg"))


def _tuple(value, key):
    if value is None:
        return None
    if not isinstance(value, list):
        raise ConfigError(f"{key}: expected a list")
    return tuple(float(v) for v in value)


def parse_config(raw: Mapping) -> ExperimentConfig:
    top = _strict("", raw, _TOP)
    seed = top.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed: expected an integer")
    try:
        data_cfg = DataConfig(**_strict("data", top.get("data", {}), [f.name for f in fields(DataConfig)]))
        reg = top.get("reg")
        reg_spec = None if reg is None else RegSpec.from_dict(reg)
        train_raw = _strict("train", top.get("train", {}), _TRAIN_KEYS)
        if "lr_grid" in train_raw:
            train_raw["lr_grid"] = _tuple(train_raw["lr_grid"], "train.lr_grid")
        train_cfg = TrainConfig(**train_raw, seed=seed, reg=reg_spec)
        sweep_raw = _strict("sweep", top.get("sweep", {}), [f.name for f in fields(SweepConfig)])
        for k in ("learning_rates", "a_grid", "p_grid"):
            if k in sweep_raw:
                sweep_raw[k] = _tuple(sweep_raw[k], f"sweep.{k}")
        sweep_cfg = SweepConfig(**sweep_raw)
        compare = _strict("compare", top.get("compare", {}), ["rows"])
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    rows = tuple(compare.get("rows", DEFAULT_ROWS))
    bad = [r for r in rows if r not in ROW_KEYS]
    if bad:
        raise ConfigError(f"compare.rows: unknown row {bad[0]!r}")
    return ExperimentConfig(
        name=str(top.get("name", "experiment")),
        seed=seed,
        output_dir=top.get("output_dir"),
        data=data_cfg,
        train=train_cfg,
        sweep=sweep_cfg,
        rows=rows,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        return parse_config(raw)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def load_datasets(cfg: ExperimentConfig) -> tuple[D.Dataset, D.Dataset, D.Dataset]:
    """Train, validation and test splits for ``cfg``; raises DataError on bad input."""
    d = cfg.data
    seq_len = cfg.train.seq_len
    if d.kind == "synth":
        full = D.synth_longrange(d.n_train, seq_len, d.vocab_size, d.signal_pos, cfg.seed,
                                 d.num_classes, split="train")
        test = D.synth_longrange(d.n_test, seq_len, d.vocab_size, d.signal_pos, cfg.seed,
                                 d.num_classes, split="test")
    elif d.kind == "r8":
        full, test = D.load_r8(d.path, seq_len=seq_len, min_count=d.min_count, test_path=d.test_path)
    else:
        full, test = D.load_affr(d.path, seq_len=seq_len, min_count=d.min_count,
                                 test_fraction=d.test_fraction, seed=cfg.seed)
    train, valid = D.split_validation(full, d.valid_fraction, cfg.seed)
    return train, valid, test
