"""Compare the compiled kernels with the numpy fallback.

Usage: python benchmarks/bench_backends.py [--repeat 5]

Each kernel runs on identical inputs under both backends; outputs are checked
for equality before timings are reported.  A final end-to-end row times one
replica of a long planar walk with each backend in a fresh interpreter.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from recurlab import _kernels_py as py

try:
    from recurlab import _kernels as cy
except ImportError:
    sys.exit("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")

E2E = """
import time
from recurlab.replication import ExperimentConfig, Resolved
from recurlab.hits import TargetSpec
from recurlab.schedule import ScheduleSpec
cfg = ExperimentConfig(dist={"family": "simple", "dimension": 2},
                       schedule=ScheduleSpec("power", count=150, beta=3),
                       target=TargetSpec((0.0, 0.0), "lattice"), form="T1Lattice",
                       replicas=1, master_seed=1)
res = Resolved(cfg)
t = time.perf_counter()
for r in range(5):
    res.replica(r)
print((time.perf_counter() - t) / 5)
"""


def cases():
    rng = np.random.Generator(np.random.Philox(0))
    words = rng.integers(0, 2**64, 1 << 16, dtype=np.uint64)
    targets = np.linspace(1, 32 * len(words), 200).astype(np.int64)
    cdf = np.cumsum([0.2, 0.3, 0.1, 0.4])[:-1]
    pos = np.cumsum(rng.standard_normal((1 << 16, 2)), axis=0)
    a = np.array([0.1, -0.2])
    return {
        "packed_counts (2 bits, 2M steps)": lambda k: k.packed_counts(words, 2, 4, targets),
        "table_counts (65k steps)": lambda k: k.table_counts(words, cdf, targets[targets <= len(words)]),
        "decode_packed (2 bits, 2M steps)": lambda k: k.decode_packed(words, 2, 32 * len(words)),
        "scan_min (65k rows)": lambda k: k.scan_min(pos, 1, a, 0.5),
        "scan_box_weighted (65k rows)": lambda k: k.scan_box_weighted(pos, 1, a, 0.5, 0.0),
    }


def same(x, y):
    if isinstance(x, tuple):
        return all(same(u, v) for u, v in zip(x, y))
    return np.array_equal(np.asarray(x), np.asarray(y))


def e2e(backend):
    env = dict(os.environ, RECURLAB_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'kernel':40s} {'cython ms':>10s} {'python ms':>10s} {'speedup':>8s}")
    for name, f in cases().items():
        if not same(f(cy), f(py)):
            sys.exit(f"backends disagree on {name}")
        tc = min(timeit.repeat(lambda: f(cy), number=1, repeat=args.repeat))
        tp = min(timeit.repeat(lambda: f(py), number=1, repeat=args.repeat))
        print(f"{name:40s} {tc * 1e3:10.3f} {tp * 1e3:10.3f} {tp / tc:8.1f}")
    tc, tp = e2e("cython"), e2e("python")
    print(f"{'replica: planar walk, 3.4M steps':40s} {tc * 1e3:10.3f} {tp * 1e3:10.3f} {tp / tc:8.1f}")


if __name__ == "__main__":
    main()
