"""Compiled vs numpy kernel timings.

    python3 benchmarks/bench_kernels.py [--repeat 200]

Times the MLP forward and backward passes and the softmax helpers on
training-sized batches, plus one full FixMatch step through the public
API under each backend.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from ssl_batchlab._kernels import available_backends
from ssl_batchlab.nnet import init

SHAPES = [
    ("moons B=64", (2, 64, 64, 2), 64),
    ("moons B=448 (weak+strong)", (2, 64, 64, 2), 448),
    ("wide B=256", (8, 256, 256, 10), 256),
]

STEP_SNIPPET = """
import time, numpy as np
from ssl_batchlab import _kernels, fixmatch, nnet
from ssl_batchlab.augment import AugmentConfig
from ssl_batchlab.sampler import Batch
rng = np.random.default_rng(0)
p = nnet.init((2, 64, 64, 2), 0)
X = rng.normal(size=(448, 2))
obs = np.where(rng.random((448, 1)) < 0.2, rng.integers(0, 2, (448, 1)), -1)
b = Batch(np.arange(448), obs >= 0)
cfg = fixmatch.FixmatchConfig(tau=0.6)
t = time.perf_counter(); n = 0
while time.perf_counter() - t < 1.0:
    fixmatch.step_loss(b, p, cfg, rng, X, obs, AugmentConfig()); n += 1
print(_kernels.BACKEND, (time.perf_counter() - t) / n)
"""


def bench(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=repeat, repeat=3)) / repeat


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    backends = available_backends()
    if "compiled" not in backends:
        print("compiled backend not built; only the numpy fallback is available")
    rng = np.random.default_rng(0)
    names = sorted(backends)
    print(f"{'kernel':<44}" + "".join(f"{n + ' (us)':>16}" for n in names) + f"{'speedup':>10}")
    for label, dims, B in SHAPES:
        params = init(dims, 0)
        X = rng.normal(size=(B, dims[0]))
        dlogits = rng.normal(size=(B, dims[-1]))
        targets = rng.integers(0, dims[-1], B)
        weights = np.full(B, 1.0 / B)
        rows = {}
        for n in names:
            k = backends[n]
            acts = k.mlp_forward(params.flat, params.layer_dims, X)
            grad = np.zeros_like(params.flat)
            rows.setdefault("forward", {})[n] = bench(lambda: k.mlp_forward(params.flat, params.layer_dims, X), args.repeat)
            rows.setdefault("backward", {})[n] = bench(
                lambda: k.mlp_backward(params.flat, params.layer_dims, acts, dlogits, grad), args.repeat)
            rows.setdefault("softmax_xent", {})[n] = bench(lambda: k.softmax_xent(acts[-1], targets, weights), args.repeat)
            rows.setdefault("softmax_confidence", {})[n] = bench(lambda: k.softmax_confidence(acts[-1]), args.repeat)
        for kernel, t in rows.items():
            line = f"{kernel + ' ' + label:<44}" + "".join(f"{1e6 * t[n]:>16.1f}" for n in names)
            if "compiled" in t:
                line += f"{t['python'] / t['compiled']:>9.2f}x"
            print(line)

    print("\nfull step_loss, 448 rows (per call):")
    for forced in (False, True):
        env = dict(os.environ)
        env.pop("SSL_BATCHLAB_PURE_PYTHON", None)
        if forced:
            env["SSL_BATCHLAB_PURE_PYTHON"] = "1"
        out = subprocess.run([sys.executable, "-c", STEP_SNIPPET], env=env, capture_output=True, text=True, check=True)
        backend, secs = out.stdout.split()
        print(f"  {backend:<10}{1e6 * float(secs):>10.1f} us")


if __name__ == "__main__":
    main()
