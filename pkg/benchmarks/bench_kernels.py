"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--epochs 10]

Times single kernel calls on the default team network (43-32-16-32-43,
batch 10) and a full training run on the synthetic corpus.
"""

import argparse
import sys
import time
import timeit

import numpy as np

from knockout_dae.autoencoder import TrainConfig, _fallback, init_network, train
from knockout_dae.autoencoder.network import ACTIVATION_CODES
from knockout_dae.autoencoder.training import default_team_spec
from knockout_dae.features import fit_team_scaler, team_training_samples
from knockout_dae.ingest import Corpus, generate_synthetic_corpus

try:
    from knockout_dae.autoencoder import _kernels
except ImportError:
    _kernels = None


def kernel_timings(impl, repeat: int) -> dict:
    spec = default_team_spec()
    params = init_network(spec, 0)
    w = [l.weights for l in params.layers]
    b = [l.biases for l in params.layers]
    codes = np.array([ACTIVATION_CODES[s.activation] for s in spec], dtype=np.intc)
    rng = np.random.default_rng(0)
    x = rng.uniform(size=(10, spec[0].in_dim))
    gw = [np.zeros_like(a) for a in w]
    gb = [np.zeros_like(a) for a in b]
    p, g = w[0].reshape(-1).copy(), rng.normal(size=w[0].size)
    m, v = np.zeros_like(p), np.zeros_like(p)

    calls = {
        "forward_batch": lambda: impl.forward_batch(w, b, codes, x),
        "loss_and_grads": lambda: impl.loss_and_grads(w, b, codes, x, x, gw, gb),
        "adam_update": lambda: impl.adam_update(p, g, m, v, 0.01, 0.9, 0.999, 1e-8, 0.1, 0.001),
    }
    out = {}
    for name, fn in calls.items():
        timer = timeit.Timer(fn)
        n, _ = timer.autorange()
        out[name] = min(timer.repeat(repeat, n)) / n
    return out


def training_time(impl, epochs: int, repeat: int) -> float:
    teams, players = generate_synthetic_corpus(7, 8, 100, 18)
    corpus = Corpus.from_rows(teams, players)
    samples = team_training_samples(corpus, fit_team_scaler(corpus))
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        train(samples, TrainConfig(epochs=epochs, seed=0), kind="team", kernels=impl)
        best = min(best, time.perf_counter() - start)
    return best


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--epochs", type=int, default=60)
    args = ap.parse_args(argv)

    impls = {"python": _fallback}
    if _kernels is None:
        print("compiled extension not built; timing the fallback only", file=sys.stderr)
    else:
        impls["cython"] = _kernels

    results = {name: kernel_timings(impl, args.repeat) for name, impl in impls.items()}
    for name, impl in impls.items():
        results[name][f"train ({args.epochs} epochs)"] = training_time(impl, args.epochs, max(1, args.repeat // 2))

    rows = list(results["python"])
    print(f"{'operation':<22}" + "".join(f"{n:>14}" for n in impls) + ("       speedup" if len(impls) > 1 else ""))
    for row in rows:
        cells = "".join(f"{_fmt(results[n][row]):>14}" for n in impls)
        if len(impls) > 1:
            cells += f"{results['python'][row] / results['cython'][row]:>13.2f}x"
        print(f"{row:<22}{cells}")
    return 0


def _fmt(seconds: float) -> str:
    if seconds < 1e-3:
        return f"{seconds * 1e6:.1f} us"
    if seconds < 1:
        return f"{seconds * 1e3:.1f} ms"
    return f"{seconds:.2f} s"


if __name__ == "__main__":
    sys.exit(main())
