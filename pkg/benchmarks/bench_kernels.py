"""Compiled kernels vs numpy fallback.

    python benchmarks/bench_kernels.py [--examples 40] [--repeat 5]

Times the hot kernels at the default sizes (hidden 150, input 300) and one
forward+backward pass per example of the attentive Tree-LSTM pair model.
"""
import argparse
import os
import sys
import timeit

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "tests"))

from synthetic import make_pairs  # noqa: E402
from treeattn import autodiff as ad  # noqa: E402
from treeattn import data as D  # noqa: E402
from treeattn import kernels  # noqa: E402
from treeattn.model import SentencePairModel  # noqa: E402


def micro(K, repeat):
    rng = np.random.default_rng(0)
    A = np.zeros((150, 300))
    x, y = rng.normal(size=150), rng.normal(size=300)
    out = np.zeros(300)
    v = rng.normal(size=150)
    g = np.zeros(150)
    cases = {
        "ger_acc 150x300": lambda: K.ger_acc(A, x, y),
        "gemv_t_acc 150x300": lambda: K.gemv_t_acc(out, A, x),
        "sigmoid 150": lambda: K.sigmoid(v),
        "sigmoid_grad_acc 150": lambda: K.sigmoid_grad_acc(g, v, x),
        "softmax 5": lambda: K.softmax(v[:5]),
    }
    res = {}
    for name, fn in cases.items():
        n = 2000
        res[name] = min(timeit.repeat(fn, number=n, repeat=repeat)) / n * 1e6
    return res


def model_step(n_examples, repeat):
    ex = make_pairs(n_examples, seed=0)
    vocab = D.Vocabulary.build(ex)
    emb = D.random_embeddings(vocab, 300, seed=0).vectors
    m = SentencePairModel("attentive-lstm", emb, 150, 5, 50, seed=0)
    rng = np.random.default_rng(0)

    def run():
        for e in ex:
            ad.backward(m.loss(e, vocab, 0.5, rng))
        m.zero_grad()

    return min(timeit.repeat(run, number=1, repeat=repeat)) / n_examples * 1e3


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--examples", type=int, default=40)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = kernels.available()
    if "cython" not in backends:
        print("compiled kernels not built; only the fallback can be timed")
    table = {}
    for b in backends:
        kernels.use(b)
        table[b] = micro(kernels.load_backend(b), args.repeat)
        table[b]["fwd+bwd per example (ms)"] = model_step(args.examples, args.repeat)
    kernels.use("auto")
    names = list(next(iter(table.values())))
    print(f"{'case':32s}" + "".join(f"{b:>12s}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for n in names:
        row = f"{n:32s}" + "".join(f"{table[b][n]:12.3f}" for b in backends)
        if len(backends) > 1:
            row += f"{table['python'][n] / table['cython'][n]:11.2f}x"
        print(row)
    print("(kernel rows in microseconds per call)")


if __name__ == "__main__":
    main()
