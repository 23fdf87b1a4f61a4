"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Set ``GPDPHS_DISABLE_NUMBA=1`` before import to force the numpy versions.
Both paths must agree to rounding; ``benchmarks/bench_kernels.py`` times them.
"""

import os

import numpy as np

_flag = os.environ.get("GPDPHS_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = _flag not in ("1", "true", "yes", "on")

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        USE_NUMBA = False


# ---------------------------------------------------------------------------
# numpy reference implementations


def sq_dists_np(A, B, inv_ls):
    """Pairwise squared distances after scaling each column by ``inv_ls``."""
    As = A * inv_ls
    Bs = B * inv_ls
    diff = As[:, None, :] - Bs[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def dphs_gram_np(X, AX, AAt, inv_phi2, sf2):
    M, d = X.shape
    diff = X[:, None, :] - X[None, :, :]
    k = np.exp(-0.5 * inv_phi2 * np.einsum("ijk,ijk->ij", diff, diff))
    Ar = AX[:, None, :] - AX[None, :, :]
    blocks = (sf2 * inv_phi2) * k[:, :, None, None] * AAt[None, None, :, :]
    blocks -= (sf2 * inv_phi2 * inv_phi2) * k[:, :, None, None] * (
        Ar[:, :, :, None] * Ar[:, :, None, :]
    )
    return blocks.transpose(0, 2, 1, 3).reshape(M * d, M * d)


def sbp_apply_np(u, inv_dz):
    out = np.empty_like(u)
    out[1:-1] = 0.5 * inv_dz * (u[2:] - u[:-2])
    out[0] = inv_dz * (u[1] - u[0])
    out[-1] = inv_dz * (u[-1] - u[-2])
    return out


# ---------------------------------------------------------------------------
# numba implementations

if USE_NUMBA:

    @njit(cache=True, nogil=True)
    def sq_dists_nb(A, B, inv_ls):
        n, d = A.shape
        m = B.shape[0]
        out = np.empty((n, m))
        for i in range(n):
            for j in range(m):
                acc = 0.0
                for k in range(d):
                    t = (A[i, k] - B[j, k]) * inv_ls[k]
                    acc += t * t
                out[i, j] = acc
        return out

    @njit(cache=True, nogil=True)
    def dphs_gram_nb(X, AX, AAt, inv_phi2, sf2):
        M, d = X.shape
        K = np.empty((M * d, M * d))
        ar = np.empty(d)
        c1 = sf2 * inv_phi2
        c2 = sf2 * inv_phi2 * inv_phi2
        for i in range(M):
            for j in range(i + 1):
                r2 = 0.0
                for a in range(X.shape[1]):
                    t = X[i, a] - X[j, a]
                    r2 += t * t
                k = np.exp(-0.5 * inv_phi2 * r2)
                for a in range(d):
                    ar[a] = AX[i, a] - AX[j, a]
                for a in range(d):
                    ka = k * c2 * ar[a]
                    for b in range(d):
                        v = k * c1 * AAt[a, b] - ka * ar[b]
                        K[i * d + a, j * d + b] = v
                        K[j * d + b, i * d + a] = v
        return K

    @njit(cache=True, nogil=True)
    def sbp_apply_nb(u, inv_dz):
        n = u.shape[0]
        out = np.empty(n)
        for i in range(1, n - 1):
            out[i] = 0.5 * inv_dz * (u[i + 1] - u[i - 1])
        out[0] = inv_dz * (u[1] - u[0])
        out[n - 1] = inv_dz * (u[n - 1] - u[n - 2])
        return out

    sq_dists = sq_dists_nb
    dphs_gram = dphs_gram_nb
    sbp_apply = sbp_apply_nb
else:
    sq_dists = sq_dists_np
    dphs_gram = dphs_gram_np
    sbp_apply = sbp_apply_np
