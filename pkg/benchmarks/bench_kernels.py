"""Compare the compiled and NumPy kernel backends.

    python benchmarks/bench_kernels.py [--repeat 200] [--train-epochs 10]

Times the fused batch loss/gradient, the full-set inference pass, the
probability cross-entropy scores, and a short end-to-end training run.
"""
import argparse
import time

import numpy as np

from softdrop import _backend
from softdrop.data import DatasetSpec, generate
from softdrop.model import Model
from softdrop.training import TrainConfig, run_training


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--train-epochs", type=int, default=10)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    model = Model.init(16, 20, d=16, hidden=32, seed=0)
    params = model.unpack()
    Xb = rng.normal(size=(32, 16))
    yb = rng.integers(20, size=32)
    Xfull = rng.normal(size=(2000, 16))
    P1 = _backend.pykernels.softmax_rows(rng.normal(size=(2000, 20)))
    P2 = _backend.pykernels.softmax_rows(rng.normal(size=(2000, 20)))
    bundle = generate(DatasetSpec(open_rate=0.2, close_rate=0.1))
    cfg = TrainConfig(t_max=args.train_epochs, t_k=min(10, args.train_epochs))

    cases = {
        "batch loss+grad (n=32)": lambda: _backend.smooth_loss_grad(Xb, *params, 30.0, yb, 0.5),
        "inference pass (n=2000)": lambda: _backend.forward_logits(Xfull, *params, 30.0),
        "prob cross-entropy (n=2000)": lambda: _backend.prob_cross_entropy_rows(P1, P2, 1e-12),
    }
    backends = _backend.available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; only the NumPy backend is timed")
    prev = _backend.get_backend()
    rows = []
    try:
        for name, fn in cases.items():
            row = [name]
            for b in backends:
                _backend.set_backend(b)
                row.append(best_of(fn, args.repeat))
            rows.append(row)
        row = [f"training run ({args.train_epochs} epochs)"]
        for b in backends:
            _backend.set_backend(b)
            row.append(best_of(lambda: run_training(bundle, cfg), 1))
        rows.append(row)
    finally:
        _backend.set_backend(prev)

    header = f"{'kernel':32s}" + "".join(f"{b:>14s}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10s}"
    print(header)
    for name, *ts in rows:
        line = f"{name:32s}" + "".join(f"{t * 1e3:12.3f}ms" for t in ts)
        if len(ts) == 2:
            line += f"{ts[0] / ts[1]:9.2f}x"
        print(line)


if __name__ == "__main__":
    main()
