"""Time the numba and numpy kernels on the same inputs and check they agree.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import math
import time

import numpy as np

from ttessel import _kernels
from ttessel.geometry import ConvexPolygon
from ttessel.models import ExponentialModel
from ttessel.smf import SmfChain


def best_of(fn, args, repeat):
    fn(*args)  # warm-up, includes numba compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times), out


def split_args(m, rng):
    chain = SmfChain(ExponentialModel.crtt(0.64), ConvexPolygon.rectangle(2.5), rng=0)
    chain.run(15_000)
    tess = chain.state
    ids, offsets, vx, vy, ea, ep, ei, bound, _ = tess.flat_cells()
    return (offsets, vx, vy, ea, ep, ei, bound, rng.integers(0, len(ids), m),
            rng.uniform(0, math.pi, m), rng.uniform(size=m), rng.uniform(size=m), tess.eps)


def neighbour_args(rng):
    q = rng.uniform(size=(20_000, 2))
    p = rng.uniform(size=(2_000, 2))
    return (q[:, 0].copy(), q[:, 1].copy(), p[:, 0].copy(), p[:, 1].copy(), 0.03)


def strauss_args(n, rng):
    b = rng.uniform(size=(n, 2))
    return (np.zeros(0), np.zeros(0), b[:, 0].copy(), b[:, 1].copy(), rng.uniform(size=n),
            rng.uniform(size=n), rng.uniform(size=n), math.log(200), 1.0, 0.03, 1.0, 100_000)


def agree(a, b):
    if isinstance(a, tuple):
        return all(agree(x, y) for x, y in zip(a, b))
    if np.isscalar(a):
        return a == b
    return np.allclose(a, b, rtol=1e-12, atol=1e-12)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    cases = {
        "split_candidates": split_args(100_000, rng),
        "neighbour_counts": neighbour_args(rng),
        "strauss_birth_death": strauss_args(200_000, rng),
    }
    print(f"{'kernel':<22}{'numba s':>12}{'numpy s':>12}{'speed-up':>10}  agree")
    for name, kargs in cases.items():
        impl = _kernels.IMPLEMENTATIONS[name]
        tn, on = best_of(impl["numba"], kargs, args.repeat)
        tp, op = best_of(impl["numpy"], kargs, args.repeat)
        print(f"{name:<22}{tn:>12.4f}{tp:>12.4f}{tp / tn:>10.1f}  {agree(on, op)}")


if __name__ == "__main__":
    main()
