#!/usr/bin/env python3
"""Benchmark the batch offset kernels against the step-wise fold.

Builds random token sequences with boundary lists, then times three
routes that must produce identical output:

* ``compiled`` — the Cython two-pointer sweep (if built)
* ``numpy``    — the pure-NumPy vectorized fallback
* ``fold``     — per-token scheduler stepping, the semantic reference

Usage::

    python3 benchmarks/bench_offsets.py [--tokens N] [--sequences N] [--repeat N]
"""

from __future__ import annotations

import argparse
import importlib
import random
import statistics
import time

from midisync.scheduler import (
    BoundaryList,
    GeneratorState,
    SchedulerParams,
    on_token,
)
from midisync.tokens import CHORD, Instrument, Token


def make_instances(n_sequences: int, n_tokens: int, seed: int):
    rng = random.Random(seed)
    instances = []
    for _ in range(n_sequences):
        tokens = []
        for _ in range(n_tokens):
            roll = rng.random()
            if roll < 0.55:
                tokens.append(Token.shift(rng.randrange(8, 1008, 8)))
            elif roll < 0.7:
                tokens.append(CHORD)
            else:
                tokens.append(Token.on(Instrument.PIANO, rng.randint(0, 127)))
        span_s = n_tokens * 0.25
        bounds = BoundaryList.from_times(
            [round(rng.uniform(0, span_s), 3) for _ in range(rng.randint(4, 64))]
        )
        instances.append((tokens, bounds))
    return instances


def load_kernels():
    kernels = {}
    for backend, module_name in (("compiled", "midisync._offsets"), ("numpy", "midisync._offsets_py")):
        try:
            kernels[backend] = importlib.import_module(module_name).compute_offsets
        except ImportError:
            print(f"note: {backend} kernel unavailable, skipping")
    return kernels


def tokens_to_arrays(tokens):
    import numpy as np

    from midisync.tokens import TokenKind

    shifts = np.fromiter(
        (t.shift_ms if t.kind is TokenKind.TIMESHIFT else 0 for t in tokens),
        dtype=np.int64,
        count=len(tokens),
    )
    cursor = np.cumsum(shifts)
    is_chord = np.fromiter(
        (t.kind is TokenKind.CHORD for t in tokens), dtype=np.uint8, count=len(tokens)
    )
    return cursor, is_chord


def bench(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--tokens", type=int, default=20_000, help="tokens per sequence")
    parser.add_argument("--sequences", type=int, default=20, help="number of sequences")
    parser.add_argument("--repeat", type=int, default=5, help="timing repetitions (best-of)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    params = SchedulerParams()
    instances = make_instances(args.sequences, args.tokens, args.seed)
    prepared = [
        (tokens_to_arrays(tokens), bounds) for tokens, bounds in instances
    ]
    total_tokens = args.sequences * args.tokens
    print(
        f"{args.sequences} sequences x {args.tokens} tokens "
        f"(total {total_tokens:,}), best of {args.repeat}\n"
    )

    kernels = load_kernels()
    results = {}
    outputs = {}
    import numpy as np

    for backend, kernel in kernels.items():
        def run(kernel=kernel):
            outs = []
            for (cursor, is_chord), bounds in prepared:
                outs.append(
                    kernel(
                        cursor,
                        is_chord,
                        np.asarray(bounds.times_ms, dtype=np.int64),
                        params.sensitivity_ms,
                        params.max_offset_ms,
                    )
                )
            return outs

        results[backend] = bench(run, args.repeat)
        outputs[backend] = run()

    def run_fold():
        outs = []
        for tokens, bounds in instances:
            state = GeneratorState.new(bounds)
            outs.append([on_token(state, tok, params) for tok in tokens])
        return outs

    results["fold"] = bench(run_fold, max(1, args.repeat // 2))
    outputs["fold"] = run_fold()

    reference = outputs["fold"]
    for backend, outs in outputs.items():
        if backend == "fold":
            continue
        same = all(list(a) == b for a, b in zip(outs, reference))
        if not same:
            print(f"WARNING: {backend} output differs from the step-wise fold!")
            return 1

    width = max(len(k) for k in results)
    baseline = results["fold"]
    print(f"{'route'.ljust(width)}  {'seconds':>9}  {'tokens/s':>12}  {'speedup':>8}")
    for backend, seconds in sorted(results.items(), key=lambda kv: kv[1]):
        rate = total_tokens / seconds
        print(
            f"{backend.ljust(width)}  {seconds:9.4f}  {rate:12,.0f}  "
            f"{baseline / seconds:7.1f}x"
        )
    print("\nall routes agree on every offset")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
