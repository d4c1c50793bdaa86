"""Throughput comparison of the compiled and pure-Python training backends.

Measures SGD step rate and whole-epoch wall time on a synthetic task for
every available backend, and checks that their forward passes agree on
identical inputs. Run from the repository root:

    python3 benchmarks/bench_backends.py
    python3 benchmarks/bench_backends.py --rows 1000 --epochs 2
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from wmark.backends import available_backends
from wmark.data import generate_synthetic
from wmark.nn import TrainConfig, init_model, train


def bench_steps(backend, model, X, y, lr: float, repeats: int) -> float:
    """Mean seconds per step_batch call over `repeats` calls."""
    weights = [W.copy() for W in model.weights]
    biases = [b.copy() for b in model.biases]
    backend.step_batch(weights, biases, X, y, lr)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        backend.step_batch(weights, biases, X, y, lr)
    return (time.perf_counter() - t0) / repeats


def bench_epochs(backend_name: str, bundle, dims, cfg: TrainConfig) -> float:
    """Wall seconds for a full train() run forced onto one backend."""
    import os

    os.environ["WMARK_BACKEND"] = backend_name
    try:
        t0 = time.perf_counter()
        train(bundle.train, None, cfg, init_model(dims, cfg.seed))
        return time.perf_counter() - t0
    finally:
        os.environ.pop("WMARK_BACKEND", None)


def main() -> int:
    ap = argparse.ArgumentParser(description="Backend throughput comparison.")
    ap.add_argument("--rows", type=int, default=5000, help="training rows")
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--labels", type=int, default=10)
    ap.add_argument("--hidden", default="128,128")
    ap.add_argument("--batch-size", type=int, default=8)
    ap.add_argument("--epochs", type=int, default=3, help="epochs per timed train() run")
    ap.add_argument("--repeats", type=int, default=200, help="step_batch calls per timing")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    backends = available_backends()
    print(f"backends: {', '.join(sorted(backends))}")

    bundle = generate_synthetic(args.labels, args.dim, args.rows, 100, 0.16, args.seed)
    hidden = [int(v) for v in args.hidden.split(",") if v.strip()]
    dims = [args.dim, *hidden, args.labels]
    model = init_model(dims, args.seed)
    X = bundle.train.inputs[: args.batch_size].astype(np.float32)
    y = bundle.train.labels[: args.batch_size]
    cfg = TrainConfig(
        learning_rate=0.1,
        epochs=args.epochs,
        batch_size=args.batch_size,
        k_trigger_per_batch=0,
        lr_halving_period_epochs=max(args.epochs, 1),
        seed=args.seed,
    )

    results = {}
    for name, backend in sorted(backends.items()):
        step_s = bench_steps(backend, model, X, y, 0.1, args.repeats)
        epoch_s = bench_epochs(name, bundle, dims, cfg) / args.epochs
        results[name] = (step_s, epoch_s)

    print(f"\n{'backend':<10} {'step (us)':>10} {'steps/s':>10} {'epoch (s)':>10}")
    for name, (step_s, epoch_s) in sorted(results.items()):
        print(f"{name:<10} {step_s * 1e6:>10.1f} {1.0 / step_s:>10.0f} {epoch_s:>10.3f}")

    if {"python", "compiled"} <= results.keys():
        py, cp = results["python"], results["compiled"]
        print(f"\ncompiled speedup: {py[0] / cp[0]:.1f}x per step, {py[1] / cp[1]:.1f}x per epoch")
        ref = backends["python"].logits(model.weights, model.biases, X)
        fast = backends["compiled"].logits(model.weights, model.biases, X)
        dev = float(np.max(np.abs(ref - fast)))
        print(f"max |logit difference| on one batch: {dev:.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
