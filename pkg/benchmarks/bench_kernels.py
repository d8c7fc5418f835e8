"""Time one SGD epoch with the compiled kernel and with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--users 500] [--dim 64] [--repeat 3]
"""

import argparse
import time

import numpy as np

from rankrobust import _pykernels

try:
    from rankrobust import _kernels
except ImportError:
    _kernels = None


def make_epoch(n_users, n_items, seq_len, n_neg, seed=0):
    rng = np.random.default_rng(seed)
    flat = rng.integers(0, n_items, size=n_users * seq_len, dtype=np.int64)
    offsets = np.repeat(np.arange(n_users, dtype=np.int64) * seq_len, seq_len - 2)
    targets = np.tile(np.arange(1, seq_len - 1, dtype=np.int64), n_users)
    order = rng.permutation(len(targets)).astype(np.int64)
    negatives = rng.integers(0, n_items, size=(len(targets), n_neg), dtype=np.int64)
    return flat, offsets, targets, order, negatives


def time_kernel(fn, emb_in, emb_out, arrays, args, repeat):
    best, loss = float("inf"), None
    for _ in range(repeat):
        a, b = emb_in.copy(), emb_out.copy()
        start = time.perf_counter()
        loss = fn(a, b, *arrays, *args)
        best = min(best, time.perf_counter() - start)
    return best, loss, a


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--users", type=int, default=500)
    ap.add_argument("--items", type=int, default=200)
    ap.add_argument("--seq-len", type=int, default=40)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--negatives", type=int, default=100)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(1)
    emb_in = rng.normal(0, 0.01, (args.items, args.dim))
    emb_out = rng.normal(0, 0.01, (args.items, args.dim))
    arrays = make_epoch(args.users, args.items, args.seq_len, args.negatives)
    kargs = (0.05, 10, 0.8)
    n_pos = len(arrays[2])
    print(f"{n_pos} training positions, d={args.dim}, {args.negatives} negatives each")

    t_py, loss_py, out_py = time_kernel(_pykernels.sgd_epoch, emb_in, emb_out, arrays, kargs, args.repeat)
    print(f"numpy   {t_py:8.3f} s/epoch  loss={loss_py / n_pos:.6f}")
    if _kernels is None:
        print("cython  not built (pip install -e . --no-build-isolation)")
        return
    t_cy, loss_cy, out_cy = time_kernel(_kernels.sgd_epoch, emb_in, emb_out, arrays, kargs, args.repeat)
    print(f"cython  {t_cy:8.3f} s/epoch  loss={loss_cy / n_pos:.6f}")
    print(f"speedup {t_py / t_cy:.1f}x, max |param diff| = {np.abs(out_py - out_cy).max():.2e}")


if __name__ == "__main__":
    main()
