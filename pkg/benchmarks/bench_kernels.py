"""Benchmark the numba kernel path against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--rows N] [--cols N] [--repeat N]

Times each hot kernel on both backends and a full classifier train step
end to end (the end-to-end run compares QSIFT_BACKEND=numba vs numpy in
subprocesses, since the backend is fixed at import time).
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from qsift import kernels


def bench(func, *args, repeat=50, warmup=True):
    if warmup:
        func(*args)
    t0 = time.perf_counter()
    for _ in range(repeat):
        func(*args)
    return (time.perf_counter() - t0) / repeat


def kernel_cases(rows, cols, rng):
    x = np.ascontiguousarray(rng.normal(size=(rows, cols)))
    g = np.ascontiguousarray(rng.normal(size=(rows, cols)))
    gain = rng.normal(size=cols)
    bias = rng.normal(size=cols)
    y = kernels.softmax_rows_np(x)
    ls = kernels.log_softmax_rows_np(x)
    _, xhat, rstd = kernels.layer_norm_rows_np(x, gain, bias, 1e-8)
    n = rows * cols
    flat = rng.normal(size=n)
    idx = rng.integers(0, rows, size=rows * 4)
    scatter_rows = np.ascontiguousarray(rng.normal(size=(rows * 4, cols)))

    def adam_case(impl):
        p, m, v = flat.copy(), np.zeros(n), np.zeros(n)
        impl(p, flat, m, v, 3, 1e-3, 0.9, 0.999, 1e-8)

    def scatter_case(impl):
        out = np.zeros((rows, cols))
        impl(out, idx, scatter_rows)

    return [
        ("softmax_rows", lambda i: i(x)),
        ("softmax_rows_backward", lambda i: i(y, g)),
        ("log_softmax_rows", lambda i: i(x)),
        ("log_softmax_rows_backward", lambda i: i(ls, g)),
        ("layer_norm_rows", lambda i: i(x, gain, bias, 1e-8)),
        ("layer_norm_rows_backward", lambda i: i(g, xhat, rstd, gain)),
        ("gelu", lambda i: i(x)),
        ("gelu_backward", lambda i: i(x, g)),
        ("adam_update", adam_case),
        ("index_add_rows", scatter_case),
    ]


def bench_kernels(rows, cols, repeat):
    numba_impls = kernels.compile_numba_impls()
    numpy_impls = {name: getattr(kernels, f"{name}_np") for name in numba_impls}
    rng = np.random.default_rng(0)
    print(f"\nkernels on ({rows}, {cols}) float64, {repeat} reps")
    print(f"{'kernel':<28}{'numpy':>12}{'numba':>12}{'speedup':>10}")
    for name, runner in kernel_cases(rows, cols, rng):
        t_np = bench(lambda: runner(numpy_impls[name]), repeat=repeat)
        t_nb = bench(lambda: runner(numba_impls[name]), repeat=repeat)
        print(f"{name:<28}{t_np * 1e6:>10.1f}us{t_nb * 1e6:>10.1f}us{t_np / t_nb:>9.1f}x")


_TRAIN_STEP_SNIPPET = """
import time
import numpy as np
from qsift import models as M, training as TR, tokenizer as tok, kernels

vocab = tok.Vocab(["[PAD]","[UNK]","[CLS]","[SEP]","[MASK]"] + [f"w{i}" for i in range(60)])
rng = np.random.default_rng(0)
seqs = [(tok.encode(" ".join(f"w{int(rng.integers(60))}" for _ in range(24)), vocab, 32),
         int(rng.random() < 0.5)) for _ in range(64)]
cfg = M.ModelConfig(num_layers=2, hidden_size=64, num_heads=4, ff_size=256,
                    vocab_size=len(vocab), max_len=32)
model = M.build_model(cfg, seed=0)
tc = TR.TrainConfig(learning_rate=1e-4, batch_size=16, epochs=1, seed=0)
TR.train(model, seqs, tc)  # warmup + jit
t0 = time.perf_counter()
TR.train(model, seqs, TR.TrainConfig(learning_rate=1e-4, batch_size=16, epochs=3, seed=0))
dt = (time.perf_counter() - t0) / 12  # 3 epochs x 4 batches
print(f"{kernels.backend()}: {dt*1e3:.2f} ms/step")
"""


def bench_train_step():
    print("\nend-to-end classifier train step (64 examples, L=2, H=64, T=32):")
    for backend in ("numpy", "numba"):
        env = dict(os.environ, QSIFT_BACKEND=backend)
        proc = subprocess.run([sys.executable, "-c", _TRAIN_STEP_SNIPPET],
                              capture_output=True, text=True, env=env)
        sys.stdout.write(proc.stdout or proc.stderr)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=2048)
    parser.add_argument("--cols", type=int, default=128)
    parser.add_argument("--repeat", type=int, default=50)
    parser.add_argument("--skip-train-step", action="store_true")
    args = parser.parse_args()
    print(f"active backend: {kernels.backend()}")
    bench_kernels(args.rows, args.cols, args.repeat)
    if not args.skip_train_step:
        bench_train_step()


if __name__ == "__main__":
    main()
