"""Compare the compiled and pure-numpy truncated-product kernels.

Usage: ``python3 benchmarks/bench_kernels.py [--repeat N]``

Part one times the raw kernel on identical inputs in-process. Part two runs
an end-to-end curvature batch in subprocesses with and without
``HAMGEOM_PURE_PYTHON=1`` so each uses the backend chosen at import.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from hamgeom import _kernels_py, jets

try:
    from hamgeom import _kernels
except ImportError:
    _kernels = None

END_TO_END = """
import time, numpy as np
from hamgeom import geometry, jets, models, samples
rng = np.random.default_rng(0)
cfg = samples.random_emd(rng, 3)
m = models.emd(cfg.metric, cfg.A, cfg.phi, 3)
pts = models.PhasePoint(rng.normal(size=({batch}, 3)), rng.normal(size=({batch}, 3)))
geometry.curvature(m, pts)
t = time.perf_counter()
geometry.curvature(m, pts)
print(jets.KERNEL_BACKEND, time.perf_counter() - t)
"""


def kernel_times(nvars, order, batch, repeat):
    space = jets.jet_space(nvars, order)
    rng = np.random.default_rng(1)
    a = rng.normal(size=(batch, space.size))
    b = rng.normal(size=(batch, space.size))
    left, right, target = space.left, space.right, space.target
    out = {}
    kernels = {"python": _kernels_py.mul_truncated}
    if _kernels is not None:
        kernels["cython"] = _kernels.mul_truncated
    ref = None
    for name, fn in kernels.items():
        buf = np.zeros((batch, space.size))

        def call():
            buf[...] = 0.0
            fn(a, b, left, right, target, buf)

        call()
        ref = buf.copy() if ref is None else ref
        assert np.allclose(buf, ref, rtol=1e-12, atol=1e-12)
        out[name] = min(timeit.repeat(call, number=1, repeat=repeat))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--batch", type=int, default=2000)
    args = ap.parse_args()
    print(f"active backend: {jets.KERNEL_BACKEND}")
    print(f"{'nvars':>5} {'order':>5} {'batch':>6} {'python [ms]':>12} {'cython [ms]':>12} {'speedup':>8}")
    for nvars, order in ((2, 4), (4, 4), (6, 4)):
        for batch in (1, args.batch):
            t = kernel_times(nvars, order, batch, args.repeat)
            cy = t.get("cython", float("nan"))
            print(f"{nvars:>5} {order:>5} {batch:>6} {1e3 * t['python']:>12.3f} {1e3 * cy:>12.3f} "
                  f"{t['python'] / cy:>8.1f}")
    print("\nend-to-end curvature, EMD n=3, batch 500:")
    for pure in ("0", "1"):
        env = dict(os.environ, HAMGEOM_PURE_PYTHON=pure)
        res = subprocess.run([sys.executable, "-c", END_TO_END.format(batch=500)], env=env,
                             capture_output=True, text=True, check=True)
        backend, secs = res.stdout.split()
        print(f"  {backend:>7}: {float(secs):.3f} s")


if __name__ == "__main__":
    main()
