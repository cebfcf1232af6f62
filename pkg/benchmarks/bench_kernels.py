"""Compiled vs numpy kernels: per-kernel timings and one end-to-end training step.

    python benchmarks/bench_kernels.py [--repeat 200] [--no-e2e]

The end-to-end figure runs each backend in a fresh interpreter, because the
backend is fixed at import (``LAD_KERNELS=python`` forces the fallback).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from lad import kernels

E2E = """
import time
import numpy as np
from lad.env.dataset import DataConfig, generate_dataset
from lad.codebook import imagine_all, textual_codebook
from lad.agent.model import LADModel, ModelConfig, init_params
from lad.training import TrainConfig, train
ds = generate_dataset(DataConfig(train_houses=8, val_unseen_houses=1, train_episodes_per_house=4))
ims = imagine_all([e for s in ds.episodes.values() for e in s], ds.world)
cfg = ModelConfig(vocab_size=len(ds.world.vocab), dim=ds.world.dim, num_rooms=ds.world.num_rooms)
m = LADModel(cfg, init_params(cfg, 0), textual_codebook(ds.world).summed())
t0 = time.perf_counter()
train(m, TrainConfig(stage="warmup", iterations=20, batch_size=8, seed=0), ds, ims)
print((time.perf_counter() - t0) / 20)
"""


def cases(rng):
    x = rng.normal(size=(256, 64))
    g, b = rng.normal(size=64), rng.normal(size=64)
    _, xhat, rstd = kernels.python_backend.layer_norm_fwd(x, g, b, 1e-5)
    s = rng.normal(size=(512, 40))
    mask = (rng.random((512, 40)) > 0.3).astype(np.uint8)
    mask[:, 0] = 1
    p = kernels.python_backend.softmax_fwd(s, mask)
    pool = rng.normal(size=(400, 64))
    idx = rng.integers(0, 400, size=(128, 6)).astype(np.int64)
    w = rng.random((128, 6))
    n = 30
    pos = rng.random((n, 2)) * 20
    indptr, indices, lengths = [0], [], []
    for i in range(n):
        nb = sorted({int(j) for j in rng.choice(n, 4, replace=False)} - {i})
        indices += nb
        lengths += [float(np.hypot(*(pos[i] - pos[j]))) for j in nb]
        indptr.append(len(indices))
    csr = (np.array(indptr, np.int64), np.array(indices, np.int64), np.array(lengths))
    pts, cen = rng.normal(size=(500, 32)), rng.normal(size=(4, 32))
    return {
        "layer_norm_fwd": lambda be: be.layer_norm_fwd(x, g, b, 1e-5),
        "layer_norm_bwd": lambda be: be.layer_norm_bwd(x, xhat, rstd, g),
        "softmax_fwd": lambda be: be.softmax_fwd(s, mask),
        "softmax_bwd": lambda be: be.softmax_bwd(s, p),
        "gather_weighted_fwd": lambda be: be.gather_weighted_fwd(pool, idx, w),
        "gather_weighted_bwd": lambda be: be.gather_weighted_bwd(x[:128], idx, w, 400),
        "dijkstra_csr": lambda be: be.dijkstra_csr(*csr, 0),
        "nearest_centroid": lambda be: be.nearest_centroid(pts, cen),
    }


def e2e(backend: str) -> float:
    env = dict(os.environ, LAD_KERNELS=backend)
    out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--no-e2e", action="store_true")
    args = ap.parse_args()
    if kernels.compiled_backend is None:
        sys.exit("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")
    rng = np.random.default_rng(0)
    print(f"{'kernel':22s} {'cython us':>10s} {'numpy us':>10s} {'speedup':>8s}")
    for name, fn in cases(rng).items():
        t = {}
        for label, be in (("c", kernels.compiled_backend), ("py", kernels.python_backend)):
            t[label] = min(timeit.repeat(lambda: fn(be), number=args.repeat, repeat=3)) / args.repeat * 1e6
        print(f"{name:22s} {t['c']:10.1f} {t['py']:10.1f} {t['py'] / t['c']:7.2f}x")
    if not args.no_e2e:
        c, py = e2e("cython"), e2e("python")
        print(f"\nwarmup iteration (batch 8): cython {1e3 * c:.0f} ms, numpy {1e3 * py:.0f} ms, {py / c:.2f}x")


if __name__ == "__main__":
    main()
