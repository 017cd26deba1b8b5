"""Time the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from metricdst._backend import compiled_available, get_kernels
from metricdst.embedder import EmbeddingModel, TrainConfig, mean_pair_loss, train
from metricdst.pseudolabel import knn_confidences


def cases(rng):
    x = rng.normal(size=(540, 2))
    y = (x[:, 0] > 0).astype(np.int64)
    model = EmbeddingModel.initialize(2, seed=0)
    cfg = TrainConfig(learning_rate=1e-2, max_epochs=5, patience=100)
    z = rng.random((1000, 2))
    zy = rng.integers(0, 2, 1000)
    q = rng.random((1300, 2))
    return {
        "train 540 rows x 5 epochs": lambda k: train(model, x, y, cfg, kernels=k),
        "mean pair loss, 1000 rows": lambda k: mean_pair_loss(z, zy, 0.25, 1.0, kernels=k),
        "kNN k=5, 1300 x 1000": lambda k: knn_confidences(q, z, zy, 5, kernels=k),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = ["python"] + (["compiled"] if compiled_available() else [])
    if len(backends) == 1:
        print("compiled extension not built; timing the fallback only")
    print(f"{'case':<28}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for name, fn in cases(np.random.default_rng(0)).items():
        times = []
        for b in backends:
            k = get_kernels(b)
            fn(k)  # warm-up
            times.append(min(timeit.repeat(lambda: fn(k), number=1, repeat=args.repeat)))
        speed = f"{times[0] / times[1]:>9.1f}x" if len(times) == 2 else ""
        print(f"{name:<28}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times) + speed)


if __name__ == "__main__":
    main()
