"""Time one training batch (forward and backward) on each kernel backend.

Usage: python benchmarks/bench_kernels.py [--shape 32,32,100,50] [--repeat 20] [--tape]

A shape is batch,steps,emb,hidden.  Without --shape a few representative
shapes are timed.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from lstmlab import lstm
from lstmlab._kernels import BACKENDS


def _best_of(fn, repeat):
    fn()  # warm up
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


DEFAULT_SHAPES = ((1, 32, 8, 8), (32, 32, 8, 8), (32, 32, 100, 50))


def _shape(text):
    parts = tuple(int(v) for v in text.split(","))
    if len(parts) != 4 or min(parts) < 1:
        raise argparse.ArgumentTypeError("expected four positive ints batch,steps,emb,hidden")
    return parts


def bench_shape(batch, steps, emb, hidden, vocab, classes, repeat, tape):
    rng = np.random.default_rng(0)
    tokens = rng.integers(0, vocab, (batch, steps))
    labels = rng.integers(0, classes, batch)
    print(f"batch={batch} steps={steps} emb={emb} hidden={hidden} vocab={vocab} best of {repeat}")
    for kind in (lstm.BASELINE, lstm.NONLINEAR_GATE):
        variant = lstm.CellVariant(kind)
        params = lstm.init_params(vocab, emb, hidden, classes, variant, seed=0)
        arrays = params.arrays()
        timings = {}
        for name, mod in sorted(BACKENDS.items()):
            timings[name] = _best_of(
                lambda mod=mod: mod.forward_backward(tokens, labels, arrays, variant.nonlinear, False),
                repeat)
        if tape:
            timings["tape"] = _best_of(
                lambda: lstm.sequence_loss(tokens, labels, params, variant), max(1, repeat // 10))
        ref = timings["python"]
        for name, t in timings.items():
            print(f"  {kind:15s} {name:7s} {t * 1e3:9.3f} ms  x{ref / t:6.2f} vs python")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--shape", type=_shape, action="append", help="batch,steps,emb,hidden")
    ap.add_argument("--vocab", type=int, default=1000)
    ap.add_argument("--classes", type=int, default=8)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--tape", action="store_true", help="also time the tape engine")
    args = ap.parse_args(argv)
    for shape in args.shape or DEFAULT_SHAPES:
        bench_shape(*shape, args.vocab, args.classes, args.repeat, args.tape)


if __name__ == "__main__":
    main()
