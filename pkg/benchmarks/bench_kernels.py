"""Compare the compiled kernels with the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Kernel-level timings use tables shaped like the ones LDJT produces; the
end-to-end timing runs one exact desk-scale trajectory per backend in a
fresh interpreter (the backend is chosen at import time).
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from tame_ldjt import _kernels_py

try:
    from tame_ldjt import _kernels_c
except ImportError:
    _kernels_c = None

E2E = """
import time
from tame_ldjt import bench, kernels
cfg = bench.ExperimentConfig(domain_size=20, groups=10, steps=10)
t = time.perf_counter()
bench.run_experiment(cfg, "none")
print(kernels.BACKEND, time.perf_counter() - t)
"""


def _cases(rng):
    a = rng.random(8)
    b = rng.random(4)
    v = np.ascontiguousarray(rng.random((40, 4)))
    w = rng.random(40)
    return {
        "product 2x2x2 * 2x2": lambda k: k.product(a, b, (2, 2, 2), (4, 2, 1), (2, 1, 0)),
        "sum_out axis 1": lambda k: k.sum_out(a, (2, 2, 2), 1),
        "take axis 2": lambda k: k.take(a, (2, 2, 2), 2, 0),
        "rsim": lambda k: k.rsim(a, a[::-1].copy()),
        "rsim_matrix 40x4": lambda k: k.rsim_matrix(v),
        "weighted_mean 40x4": lambda k: k.weighted_mean(v, w),
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20000)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    backends = [("python", _kernels_py)] + ([("cython", _kernels_c)] if _kernels_c else [])
    print(f"{'kernel':24s}" + "".join(f"{name:>14s}" for name, _ in backends) + "   (us per call)")
    for label, fn in _cases(rng).items():
        row = f"{label:24s}"
        for _, mod in backends:
            secs = min(timeit.repeat(lambda: fn(mod), number=args.repeat, repeat=3))
            row += f"{secs / args.repeat * 1e6:14.2f}"
        print(row)
    print("\nend to end (exact run, |D(X)|=20, 10 groups, T=10):")
    for force in ("", "1"):
        env = dict(os.environ)
        env.pop("TAME_LDJT_PURE_PYTHON", None)
        if force:
            env["TAME_LDJT_PURE_PYTHON"] = force
        out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True)
        print("  " + (out.stdout.strip() or out.stderr.strip().splitlines()[-1]))
    return 0


if __name__ == "__main__":
    sys.exit(main())
