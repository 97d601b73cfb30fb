"""Compare the compiled and pure-Python kernels.

    python3 benchmarks/bench_kernels.py [--sizes 1000,10000,100000] [--repeat 5]

Prints the best wall time per kernel and input size, and the speed-up.
"""

from __future__ import annotations

import argparse
import random
import sys
import timeit

from hitlist6 import _pycore, kernels
from hitlist6.apd import DENSE_LENGTHS, DENSE_THRESHOLD


def clustered(n: int, seed: int) -> list[int]:
    rng = random.Random(seed)
    a = 0x20010DB8 << 96
    out = []
    for _ in range(n):
        a += rng.randint(1, 64) if rng.random() < 0.8 else rng.randint(65, 1 << 20)
        out.append(a)
    rng.shuffle(out)
    return out


def dense(n: int, seed: int) -> list[int]:
    rng = random.Random(seed)
    nets = [(0x20010DB8 << 96) | (rng.getrandbits(32) << 64) for _ in range(max(1, n // 500))]
    return [rng.choice(nets) | rng.getrandbits(16) for _ in range(n)]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="1000,10000,100000")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    core = kernels.compiled()
    if core is None:
        print("compiled core not built; only the Python backend is available", file=sys.stderr)
    print(f"{'kernel':<16}{'n':>9}{'python s':>12}{'cython s':>12}{'speed-up':>10}")
    for n in (int(s) for s in args.sizes.split(",")):
        cases = {
            "cluster_runs": (lambda m, x: m.cluster_runs(x, 10, 64), clustered(n, args.seed)),
            "dense_prefixes": (lambda m, x: m.dense_prefixes(x, DENSE_LENGTHS, DENSE_THRESHOLD), dense(n, args.seed)),
        }
        for name, (call, data) in cases.items():
            py = min(timeit.repeat(lambda: call(_pycore, data), number=1, repeat=args.repeat))
            if core is None:
                print(f"{name:<16}{n:>9}{py:>12.4f}{'-':>12}{'-':>10}")
                continue
            if call(core, data) != call(_pycore, data):
                raise SystemExit(f"{name}: backends disagree at n={n}")
            cy = min(timeit.repeat(lambda: call(core, data), number=1, repeat=args.repeat))
            print(f"{name:<16}{n:>9}{py:>12.4f}{cy:>12.4f}{py / cy:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
