"""Compare the numba and numpy kernel backends on training-sized inputs.

Both implementations are imported directly (the ``CIPL_NUMBA`` switch only
chooses which one the library uses), checked for agreement and then timed.

    python benchmarks/bench_kernels.py --repeat 20
"""

import argparse
import time

import numpy as np

from cipl.numerics import _kernels_numba as knb
from cipl.numerics import _kernels_numpy as knp


def cases(rng, batch):
    # shapes seen by a 64px backbone at batch size 2B and by the prototype head
    xp = rng.random((batch, 34, 34, 32), dtype=np.float32)
    dcols = rng.random((batch, 32, 32, 9 * 32), dtype=np.float32)
    x = rng.random((batch, 32, 32, 32), dtype=np.float32)
    pooled, idx = knp.maxpool_forward(x, 2)
    s = rng.random((batch, 64, 40), dtype=np.float32)
    fa = rng.random((batch, 64, 16), dtype=np.float32)
    protos = rng.random((40, 16), dtype=np.float32)
    img = rng.random((64, 64, 1), dtype=np.float32)
    m = np.array([[0.98, 0.17, -4.0], [-0.17, 0.98, 6.0]])
    return {
        "im2col 3x3": lambda k: k.im2col(xp, 3, 3, 1, 32, 32),
        "col2im 3x3": lambda k: k.col2im(dcols, 34, 34, 3, 3, 1),
        "maxpool fwd": lambda k: k.maxpool_forward(x, 2),
        "maxpool bwd": lambda k: k.maxpool_backward(pooled, idx, 32, 32, 2),
        "spatial argmax": lambda k: k.spatial_argmax(s),
        "sqdist shared": lambda k: k.sqdist(fa, protos),
        "sqdist batched": lambda k: k.sqdist(fa, fa),
        "warp affine": lambda k: k.warp_affine(img, m, 64, 64),
    }


def timeit(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _agree(a, b):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    return all(np.allclose(u, v, rtol=1e-5, atol=1e-5) for u, v in zip(a, b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=10)
    ap.add_argument("--batch", type=int, default=16)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    table = cases(np.random.default_rng(args.seed), args.batch)
    print(f"{'kernel':<16} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}  agree")
    for name, fn in table.items():
        t0 = time.perf_counter()
        ref = fn(knb)  # first call compiles
        jit = time.perf_counter() - t0
        ok = _agree(ref, fn(knp))
        tn = timeit(lambda: fn(knp), args.repeat)
        tb = timeit(lambda: fn(knb), args.repeat)
        print(f"{name:<16} {tn * 1e3:10.3f} {tb * 1e3:10.3f} {tn / tb:8.2f}x  {ok}  (jit {jit:.2f}s)")


if __name__ == "__main__":
    main()
