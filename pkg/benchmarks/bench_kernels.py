"""Compiled vs numpy kernels, one routine at a time and as a whole training step.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Shapes follow the toy configuration: 8 sequences of 192 tokens, width 64,
4 heads, 259-symbol vocabulary.
"""

from __future__ import annotations

import argparse
import json
import timeit

import numpy as np

from hirpf import numerics as nx
from hirpf.backbone import Backbone, ModelConfig
from hirpf.identity import AdapterConfig, HIRPFModel, IdentityRegistry
from hirpf.numerics import kernels
from hirpf.trainer import TrainConfig, Trainer, build_training_example, overfit_fixture

B, T, D, H, V = 8, 192, 64, 4, 259


def kernel_cases(dtype, rng):
    N = B * T
    x = rng.normal(size=(N, D)).astype(dtype)
    gain, bias = np.ones(D, dtype), np.zeros(D, dtype)
    s = rng.normal(size=(B * H, T, T)).astype(dtype)
    logits = rng.normal(size=(N, V)).astype(dtype)
    targets = rng.integers(0, V, size=N).astype(np.int64)
    w = np.full(N, 1.0 / N, dtype)
    h = rng.normal(size=B * T * 4 * D).astype(dtype)

    def prep(k):
        y, xhat, rstd = k.layer_norm_fwd(x, gain, bias, 1e-5)
        p = k.causal_softmax_fwd(s)
        _, probs = k.xent_fwd(logits, targets)
        _, t = k.gelu_fwd(h)
        return xhat, rstd, p, probs, t

    def cases(k):
        xhat, rstd, p, probs, t = prep(k)
        return {
            "layer_norm_fwd": lambda: k.layer_norm_fwd(x, gain, bias, 1e-5),
            "layer_norm_bwd": lambda: k.layer_norm_bwd(x, xhat, rstd, gain),
            "causal_softmax_fwd": lambda: k.causal_softmax_fwd(s),
            "causal_softmax_bwd": lambda: k.causal_softmax_bwd(s, p),
            "xent_fwd": lambda: k.xent_fwd(logits, targets),
            "xent_bwd": lambda: k.xent_bwd(probs, targets, w),
            "gelu_fwd": lambda: k.gelu_fwd(h),
            "gelu_bwd": lambda: k.gelu_bwd(h, h, t),
        }

    return cases


def best_of(fn, repeat: int, number: int = 3) -> float:
    fn()
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def train_step_seconds(backend: str, repeat: int) -> float:
    kernels.use(backend)
    cfg = ModelConfig(max_len=256)
    model = HIRPFModel(Backbone.init(cfg), IdentityRegistry(), AdapterConfig(rank=16, alpha=16))
    reg = model.registry
    examples = [build_training_example(s, reg, cfg.max_len) for s in overfit_fixture()]
    batch = [e for e in examples if e.signature == examples[0].signature][:B]
    trainer = Trainer(model, TrainConfig(lr=1e-2, grad_accum=1))
    return best_of(lambda: trainer.train_step([batch]), repeat, number=1)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    ap.add_argument("--skip-step", action="store_true", help="only time the individual kernels")
    ap.add_argument("--json", help="write the timings here")
    args = ap.parse_args(argv)
    if not kernels.compiled_available():
        print("compiled kernels are not built; run `pip install --no-build-isolation -e .` first")
        return 1
    dtype = np.dtype(args.dtype)
    cases = kernel_cases(dtype, np.random.default_rng(0))
    rows = []
    py, cy = cases(kernels.module("python")), cases(kernels.module("cython"))
    for name in py:
        tp, tc = best_of(py[name], args.repeat), best_of(cy[name], args.repeat)
        rows.append({"kernel": name, "python_ms": 1e3 * tp, "cython_ms": 1e3 * tc, "speedup": tp / tc})
    if not args.skip_step:
        with nx.precision(args.dtype):
            tp = train_step_seconds("python", max(1, args.repeat // 2))
            tc = train_step_seconds("cython", max(1, args.repeat // 2))
        rows.append({"kernel": "train_step (toy config)", "python_ms": 1e3 * tp, "cython_ms": 1e3 * tc,
                     "speedup": tp / tc})
        kernels.use("cython")
    width = max(len(r["kernel"]) for r in rows)
    print(f"{'kernel':<{width}}  {'python ms':>10}  {'cython ms':>10}  {'speedup':>7}   ({args.dtype})")
    for r in rows:
        print(f"{r['kernel']:<{width}}  {r['python_ms']:>10.3f}  {r['cython_ms']:>10.3f}  {r['speedup']:>6.2f}x")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump({"dtype": args.dtype, "rows": rows}, fh, indent=2)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
