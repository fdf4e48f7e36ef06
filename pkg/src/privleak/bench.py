"""Benchmark the compiled kernels against the numpy fallback.

Kernel timings run in-process against both implementations; the end-to-end
training comparison launches a subprocess per backend because the backend is
fixed at import time. Run as `python -m privleak.bench`.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from privleak._kernels import numpy_backend


def _compiled_backend():
    try:
        from privleak._kernels import _core
    except ImportError:
        return None
    return _core


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def _kernel_cases(rng):
    cases = []
    for n, k, m in [(128, 32, 64), (128, 64, 32), (512, 128, 128)]:
        a = rng.standard_normal((n, k))
        b = rng.standard_normal((k, m))
        bias = rng.standard_normal(m)
        g = rng.standard_normal((n, m))
        cases.append((f"affine {n}x{k}x{m}", lambda impl, a=a, b=b, bias=bias: impl.affine(a, b, bias)))
        cases.append((f"matmul_tn {n}x{k}x{m}", lambda impl, a=a, g=g: impl.matmul_tn(a, g)))
    r = rng.standard_normal((2048, 64))
    cases.append(("row_sum 2048x64", lambda impl, r=r: impl.row_sum(r)))
    x = rng.standard_normal((2048, 256))
    gx = rng.standard_normal((2048, 256))
    cases.append(("relu_bwd 2048x256", lambda impl, x=x, gx=gx: impl.relu_bwd(x, gx)))
    p = rng.standard_normal(100_000)
    gp = rng.standard_normal(100_000)
    m = np.zeros(100_000)
    v = np.zeros(100_000)
    cases.append(("adam 100k", lambda impl, p=p, gp=gp, m=m, v=v: impl.adam_update(
        p, gp, m, v, 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001)))
    return cases


def train_probe():
    """A small private training run; used by the end-to-end comparison."""
    from privleak import losses
    from privleak.data import SyntheticSpec, generate_synthetic
    from privleak.losses import LossKind
    from privleak.protocol import TrainConfig, train_private
    from privleak.models import LayerSpec

    spec = SyntheticSpec(d=32, num_consensual=3, num_private=2, n_train=2000, n_test=500,
                         entanglement=0.8, seed=7)
    train, test = generate_synthetic(spec)
    arch = (32, (LayerSpec(64), LayerSpec(32), LayerSpec(3, "none")), (1, 2))
    cfg = TrainConfig(loss=LossKind(losses.CONFUSION, 0.5), tap=1, epochs=5,
                      batch_size=128, seed=11)
    run = train_private(arch, (LayerSpec(16), LayerSpec(2, "none")), train, test, cfg)
    return run.curves[-1]["utility"]


def _time_training(backend: str) -> float:
    env = dict(os.environ, PRIVLEAK_BACKEND=backend)
    code = ("import time, privleak.bench as b; t = time.perf_counter(); b.train_probe(); "
            "print(time.perf_counter() - t)")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                         text=True, check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="compare kernel backends")
    parser.add_argument("--repeat", type=int, default=5, help="timing repetitions, best kept")
    parser.add_argument("--skip-training", action="store_true",
                        help="only run the kernel microbenchmarks")
    args = parser.parse_args(argv)

    compiled = _compiled_backend()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<24} {'numpy':>12} {'cython':>12} {'speedup':>9}")
    for name, fn in _kernel_cases(rng):
        t_np = _time(lambda: fn(numpy_backend), args.repeat)
        if compiled is None:
            print(f"{name:<24} {t_np * 1e6:>10.1f}us {'-':>12} {'-':>9}")
            continue
        t_cy = _time(lambda: fn(compiled), args.repeat)
        print(f"{name:<24} {t_np * 1e6:>10.1f}us {t_cy * 1e6:>10.1f}us {t_np / t_cy:>8.2f}x")

    if not args.skip_training:
        t_np = _time_training("numpy")
        line = f"{'training probe':<24} {t_np:>11.2f}s"
        if compiled is not None:
            t_cy = _time_training("cython")
            line += f" {t_cy:>11.2f}s {t_np / t_cy:>8.2f}x"
        else:
            line += f" {'-':>12} {'-':>9}"
        print(line)
    if compiled is None:
        print("compiled backend not built; install with a C compiler to compare")
    return 0


if __name__ == "__main__":
    sys.exit(main())
