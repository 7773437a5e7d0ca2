"""``lstmlab`` command line: reorder, train, eval, compare, sweep."""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config, load_datasets
from .data import DataError
from .lstm import load_checkpoint, save_checkpoint
from .reorder import ngram_reorder_indices, reorder_indices, tree_order
from .train import (
    ROW_KEYS,
    TrainingDiverged,
    evaluate,
    permutation_for,
    run_comparison,
    run_sweep,
    train_model,
)


class CliError(Exception):
    pass


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _resolve(args) -> tuple[ExperimentConfig, Path]:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    out = args.out or cfg.output_dir
    if not out:
        raise CliError("no output directory: pass --out or set output_dir in the config")
    return replace(cfg, output_dir=str(out)), Path(out)


def _prepare_out(out: Path, cfg: ExperimentConfig) -> None:
    out.mkdir(parents=True, exist_ok=True)
    resolved = cfg.to_dict()
    resolved["lstmlab_version"] = __version__
    _dump(out / "config.json", resolved)


class _MetricsSink:
    def __init__(self, path: Path, quiet: bool = False):
        self.fh = path.open("w", encoding="utf-8")
        self.quiet = quiet

    def __call__(self, metrics, row: str | None = None) -> None:
        record = metrics.to_dict()
        if row is not None:
            record = {"row": row, **record}
        line = json.dumps(record, sort_keys=True)
        self.fh.write(line + "\n")
        if not self.quiet:
            print(line, flush=True)

    def close(self) -> None:
        self.fh.close()


def cmd_reorder(args) -> int:
    if args.len is None or args.len < 1:
        raise CliError("--len must be a positive integer")
    if args.ngram is not None:
        if not 1 <= args.ngram <= args.len:
            raise CliError(f"--ngram must satisfy 1 <= n <= {args.len}")
        if args.pre_reversal:
            perm = ngram_reorder_indices(args.len, args.ngram)[::-1]
        else:
            perm = ngram_reorder_indices(args.len, args.ngram)
    else:
        perm = tree_order(args.len) if args.pre_reversal else reorder_indices(args.len)
    print(",".join(map(str, perm)))
    return 0


def cmd_train(args) -> int:
    cfg, out = _resolve(args)
    train, valid, test = load_datasets(cfg)
    _prepare_out(out, cfg)
    sink = _MetricsSink(out / "metrics.jsonl", args.quiet)
    try:
        result = train_model(cfg.train, train, valid, on_metrics=sink)
    finally:
        sink.close()
    variant = cfg.train.variant
    perm = permutation_for(cfg.train)
    summary = {
        "best_epoch": result.best_epoch,
        "train": evaluate(result.params, train, variant, perm, result.best_epoch).to_dict(),
        "valid": evaluate(result.params, valid, variant, perm, result.best_epoch).to_dict(),
        "test": evaluate(result.params, test, variant, perm, result.best_epoch).to_dict(),
    }
    save_checkpoint(out / "checkpoint.npz", result.params, variant,
                    {"seed": cfg.seed, "best_epoch": result.best_epoch, "perm_mode": cfg.train.perm_mode,
                     "ngram": cfg.train.ngram, "seq_len": cfg.train.seq_len})
    _dump(out / "summary.json", summary)
    return 0


def cmd_eval(args) -> int:
    cfg, out = _resolve(args)
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "checkpoint.npz"
    if not ckpt.is_file():
        raise CliError(f"{ckpt}: checkpoint not found (run 'train' first or pass --checkpoint)")
    params, variant, _ = load_checkpoint(ckpt)
    train, valid, test = load_datasets(cfg)
    perm = permutation_for(cfg.train)
    result = {split.split: evaluate(params, split, variant, perm).to_dict() for split in (train, valid, test)}
    out.mkdir(parents=True, exist_ok=True)
    # config kept inside eval.json so a shared train directory keeps its own config.json
    resolved = cfg.to_dict()
    resolved["lstmlab_version"] = __version__
    checkpoint = {"path": str(ckpt), "sha256": hashlib.sha256(ckpt.read_bytes()).hexdigest()}
    _dump(out / "eval.json", {**result, "checkpoint": checkpoint, "config": resolved})
    print(json.dumps(result, sort_keys=True))
    return 0


def cmd_compare(args) -> int:
    cfg, out = _resolve(args)
    rows = cfg.rows
    if args.rows:
        rows = tuple(r.strip() for r in args.rows.split(",") if r.strip())
        bad = [r for r in rows if r not in ROW_KEYS]
        if bad:
            raise CliError(f"--rows: unknown row {bad[0]!r}; have {', '.join(ROW_KEYS)}")
        cfg = replace(cfg, rows=rows)
    train, valid, test = load_datasets(cfg)
    _prepare_out(out, cfg)
    sink = _MetricsSink(out / "metrics.jsonl", args.quiet)
    try:
        report = run_comparison(cfg.train, train, valid, test, rows=rows,
                                reg_specs=cfg.sweep.specs(), on_metrics=lambda k, m: sink(m, k))
    finally:
        sink.close()
    _dump(out / "report.json", report.to_dict())
    text = report.render()
    (out / "report.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def cmd_sweep(args) -> int:
    cfg, out = _resolve(args)
    train, valid, _ = load_datasets(cfg)
    _prepare_out(out, cfg)
    entries = run_sweep(cfg.train, train, valid, cfg.sweep.specs(), cfg.sweep.learning_rates)
    best = max(range(len(entries)), key=lambda k: (entries[k]["valid_accuracy"], -k))
    _dump(out / "sweep.json", {"entries": entries, "best": entries[best]})
    for e in entries:
        print(json.dumps(e, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lstmlab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"lstmlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reorder", help="print a feed-order permutation")
    p.add_argument("--len", type=int, required=True, help="sequence length N")
    p.add_argument("--ngram", type=int, default=None, help="keep contiguous groups of this size")
    p.add_argument("--pre-reversal", action="store_true", help="print the tree walk before reversal")
    p.set_defaults(func=cmd_reorder, usage=p.format_usage())

    for name, func, help_ in (
        ("train", cmd_train, "train one configuration"),
        ("eval", cmd_eval, "evaluate a saved checkpoint"),
        ("compare", cmd_compare, "train the comparison rows and write the report"),
        ("sweep", cmd_sweep, "grid over learning rates and penalty settings"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="experiment JSON file")
        p.add_argument("--out", default=None, help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=int, default=None, help="root seed (overrides seed)")
        p.add_argument("--quiet", action="store_true", help="do not echo metrics to stdout")
        if name == "compare":
            p.add_argument("--rows", default=None, help=f"comma list from {','.join(ROW_KEYS)}")
        if name == "eval":
            p.add_argument("--checkpoint", default=None, help="checkpoint path (default OUT/checkpoint.npz)")
        p.set_defaults(func=func, usage=p.format_usage())
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ConfigError, DataError, TrainingDiverged, ValueError) as exc:
        if isinstance(exc, CliError):
            print(args.usage, end="", file=sys.stderr)
        print(f"lstmlab {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
