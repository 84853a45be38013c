"""Compare the compiled and pure-Python kernels.

    python benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel and shape with the median time of each backend,
the speedup and the largest absolute difference between their outputs.
"""
from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from ldmlab import _kernels_py as py

try:
    from ldmlab import _ckernels as cy
except ImportError:
    cy = None


def _median_ms(fn, repeat: int) -> float:
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return 1e3 * statistics.median(times)


def _maxdiff(a, b) -> float:
    if isinstance(a, tuple):
        return max(_maxdiff(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))))


def cases(rng):
    for K, m in ((64, 32), (1024, 8), (4096, 2)):
        X, Xs = rng.standard_normal((K, m)), rng.standard_normal((K, m))
        W1, b1 = rng.standard_normal((m, 200)) * np.sqrt(2 / m), np.zeros(200)
        w2, b2 = rng.standard_normal((200, 1)) * np.sqrt(1 / 200), np.zeros(1)
        yield (f"js_objective K={K} m={m}",
               lambda X=X, Xs=Xs, W1=W1, b1=b1, w2=w2, b2=b2: py.js_objective(X, Xs, W1, b1, w2, b2),
               lambda X=X, Xs=Xs, W1=W1, b1=b1, w2=w2, b2=b2: cy.js_objective(X, Xs, W1, b1, w2.ravel(), float(b2[0])))
    x = rng.standard_normal((64, 1, 28, 28))
    w = rng.standard_normal((4, 1, 5, 5))
    yield "conv2d_forward 64x1x28x28 k5", lambda: py.conv2d_forward(x, w), lambda: cy.conv2d_forward(x, w)
    g = rng.standard_normal((64, 4, 24, 24))
    yield ("conv2d_backward 64x1x28x28 k5", lambda: py.conv2d_backward(x, w, g),
           lambda: cy.conv2d_backward(x, w, g))
    p = rng.standard_normal((64, 8, 8, 8))
    yield "maxpool2d_forward 64x8x8x8", lambda: py.maxpool2d_forward(p), lambda: cy.maxpool2d_forward(p)
    gp = rng.standard_normal((64, 8, 4, 4))
    _, arg = py.maxpool2d_forward(p)
    yield ("maxpool2d_backward 64x8x8x8", lambda: py.maxpool2d_backward(gp, arg, p.shape),
           lambda: cy.maxpool2d_backward(gp, arg, p.shape))


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    if cy is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    rng = np.random.default_rng(0)
    print(f"{'kernel':36s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s} {'max |diff|':>11s}")
    for name, f_py, f_cy in cases(rng):
        t_py, t_cy = _median_ms(f_py, args.repeat), _median_ms(f_cy, args.repeat)
        diff = _maxdiff(f_py(), f_cy())
        print(f"{name:36s} {t_py:10.3f} {t_cy:10.3f} {t_py / t_cy:8.2f} {diff:11.2e}")


if __name__ == "__main__":
    main()
