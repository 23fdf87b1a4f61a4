"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

Kernel timings call both implementations in one process. The end-to-end
NLML timing runs a subprocess per backend, since the backend is chosen by
GPDPHS_DISABLE_NUMBA at import.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from gpdphs import _kernels
from gpdphs.grid import make_grid
from gpdphs.operators import string_structure

NLML_SNIPPET = """
import timeit, numpy as np
from gpdphs.grid import make_grid
from gpdphs.model import DphsHyper, dphs_nlml
from gpdphs.operators import string_structure
from gpdphs.pipeline import DerivativeDataset
g = make_grid(10.0, 30)
rng = np.random.default_rng(0)
X = rng.normal(size=(40, 60))
ds = DerivativeDataset(g, np.arange(40.0), X, rng.normal(size=X.shape))
s = string_structure(g)
h = DphsHyper([0.01], 2.0, 0.1, 0.01)
dphs_nlml(ds, s, h)
print(min(timeit.repeat(lambda: dphs_nlml(ds, s, h), number=1, repeat={repeat})))
"""


def best(fn, repeat):
    fn()  # compile / warm caches
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_cases(M=40, N=30):
    rng = np.random.default_rng(0)
    g = make_grid(10.0, N)
    A = string_structure(g).flow_map([0.01])
    X = rng.normal(size=(M, 2 * N))
    AX = X @ A.T
    AAt = A @ A.T
    inv_ls = np.array([1.0, 0.5])
    T = rng.normal(size=(800, 2))
    u = rng.normal(size=401)
    return {
        f"dphs_gram M={M} N={N}": (
            lambda: _kernels.dphs_gram_np(X, AX, AAt, 0.25, 1.0),
            lambda: _kernels.dphs_gram_nb(X, AX, AAt, 0.25, 1.0),
        ),
        "sq_dists 800x800": (
            lambda: _kernels.sq_dists_np(T, T, inv_ls),
            lambda: _kernels.sq_dists_nb(T, T, inv_ls),
        ),
        "sbp_apply N=401": (
            lambda: _kernels.sbp_apply_np(u, 40.0),
            lambda: _kernels.sbp_apply_nb(u, 40.0),
        ),
    }


def nlml_time(disable, repeat):
    env = dict(os.environ, GPDPHS_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run(
        [sys.executable, "-c", NLML_SNIPPET.format(repeat=repeat)],
        env=env, capture_output=True, text=True, check=True,
    )
    return float(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not _kernels.USE_NUMBA:
        sys.exit("numba is disabled in this process; unset GPDPHS_DISABLE_NUMBA")

    print(f"{'case':28s} {'numpy':>10s} {'numba':>10s} {'speedup':>8s}")
    for name, (f_np, f_nb) in kernel_cases().items():
        np.testing.assert_allclose(f_nb(), f_np(), rtol=1e-12, atol=1e-12)
        t_np, t_nb = best(f_np, args.repeat), best(f_nb, args.repeat)
        print(f"{name:28s} {t_np * 1e3:9.3f}ms {t_nb * 1e3:9.3f}ms {t_np / t_nb:7.1f}x")
    t_np, t_nb = nlml_time(True, args.repeat), nlml_time(False, args.repeat)
    print(f"{'dphs nlml M=40 N=30':28s} {t_np * 1e3:9.3f}ms {t_nb * 1e3:9.3f}ms {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
