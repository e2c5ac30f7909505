"""Compiled kernels vs the numpy fallback.

Times the recurrent-cell loss/gradient kernel (one weight-sharing training
step's worth of work), the loss-only kernel (one evaluation batch), and the
Kendall pair counter, at the default experiment sizes.

    python benchmarks/bench_kernels.py [--repeat 7] [--number 20]
"""

import argparse
import timeit

import numpy as np

from naseval import _pykernels

try:
    from naseval import _ckernels
except ImportError:  # built without the extension
    _ckernels = None


def cell_inputs(node_count=2, vocab=8, embed=8, hidden=16, batch=32, steps=20, seed=0):
    rng = np.random.default_rng(seed)
    n_edges = node_count * (node_count + 1) // 2
    params = [
        rng.uniform(-0.1, 0.1, (vocab, embed)),
        rng.uniform(-0.3, 0.3, (hidden, embed)),
        rng.uniform(-0.25, 0.25, (hidden, hidden)),
        rng.uniform(-0.25, 0.25, (n_edges, hidden, hidden)),
        rng.uniform(-0.25, 0.25, (vocab, hidden)),
        np.zeros(vocab),
    ]
    tokens = rng.integers(0, vocab, (batch, steps + 1))
    preds = np.arange(node_count)  # node i reads node i-1
    ops = np.full(node_count, 2)  # tanh
    eidx = np.array([i * (i + 1) // 2 + i for i in range(node_count)])
    return tokens, preds, ops, eidx, params


def bench(fn, repeat, number):
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--number", type=int, default=20)
    args = ap.parse_args(argv)

    impls = {"numpy": _pykernels}
    if _ckernels is not None:
        impls["compiled"] = _ckernels
    else:
        print("compiled extension not available; timing the numpy fallback only")

    tok, preds, ops, eidx, params = cell_inputs()
    grads = [np.zeros_like(p) for p in params]
    x = np.random.default_rng(1).permutation(32).astype(float)
    y = np.random.default_rng(2).permutation(32).astype(float)
    cases = {
        "loss + gradient (B=32, T=20, H=16)": lambda m: (lambda: m.cell_loss_grad(tok, preds, ops, eidx, *params,
                                                                                     grads=grads)),
        "loss only       (B=32, T=20, H=16)": lambda m: (lambda: m.cell_loss_grad(tok, preds, ops, eidx, *params)),
        "pair count      (32 items)": lambda m: (lambda: m.count_pairs(x, y)),
    }
    print(f"{'kernel':38s}" + "".join(f"{k:>14s}" for k in impls) + ("   speedup" if len(impls) == 2 else ""))
    for name, make in cases.items():
        times = {k: bench(make(m), args.repeat, args.number) for k, m in impls.items()}
        row = f"{name:38s}" + "".join(f"{t * 1e6:11.1f} us" for t in times.values())
        if len(times) == 2:
            row += f"   {times['numpy'] / times['compiled']:6.2f}x"
        print(row)


if __name__ == "__main__":
    main()
