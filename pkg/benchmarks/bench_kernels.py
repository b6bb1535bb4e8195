"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel runs on the same inputs under both backends and the outputs are
checked for bit-equality before any timing is reported.
"""

from __future__ import annotations

import argparse
import json
import sys
import timeit

import numpy as np

from microcast import _pykernels

try:
    from microcast import _kernels
except ImportError:
    _kernels = None


def cases(rng):
    x = rng.normal(size=(256, 1024)).cumsum(axis=1)
    times = np.sort(rng.integers(0, 90 * 86400, size=200_000)).astype(np.int64)
    values = rng.normal(size=times.size)
    series = rng.normal(size=200_000)
    valid = rng.random(series.size) > 0.2
    return {
        "haar_atrous 256x1024 L=4": ("haar_atrous", (x, 4)),
        "bin_mean 200k readings -> 15-min cells": ("bin_mean", (times, values, 0, 900, 90 * 96)),
        "fill_runs 200k cells, max_gap=3": ("fill_runs", (series, valid, 3)),
    }


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b), equal_nan=True)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write the results as JSON")
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; nothing to compare", file=sys.stderr)
        return 1
    rows = []
    for label, (name, inputs) in cases(np.random.default_rng(0)).items():
        fast, slow = getattr(_kernels, name), getattr(_pykernels, name)
        if not _same(fast(*inputs), slow(*inputs)):
            print(f"{label}: backends disagree", file=sys.stderr)
            return 1
        t_c = min(timeit.repeat(lambda: fast(*inputs), number=1, repeat=args.repeat))
        t_py = min(timeit.repeat(lambda: slow(*inputs), number=1, repeat=args.repeat))
        rows.append({"kernel": label, "cython_s": t_c, "python_s": t_py, "speedup": t_py / t_c})
    width = max(len(r["kernel"]) for r in rows)
    print(f"{'kernel':<{width}}  {'cython':>10}  {'numpy':>10}  {'speedup':>8}")
    for r in rows:
        print(f"{r['kernel']:<{width}}  {r['cython_s'] * 1e3:>8.2f}ms  {r['python_s'] * 1e3:>8.2f}ms  {r['speedup']:>7.1f}x")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
