"""Scalar-output GP regression with squared-exponential kernels."""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from . import _kernels
from .errors import NotPositiveDefiniteError, OptimizationError

LOG_2PI = np.log(2.0 * np.pi)

JITTER_START = 1e-8
JITTER_MAX = 1e-2
VAR_CLAMP_TOL = 1e-10


@dataclass(frozen=True)
class SEHyper:
    """Signal std, lengthscales (one per input dim, or a single shared one)
    and noise std of a squared-exponential GP."""

    sigma_f: float
    lengthscales: np.ndarray
    sigma_n: float = 0.0

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float)).copy()
        ls.setflags(write=False)
        object.__setattr__(self, "lengthscales", ls)
        if not self.sigma_f > 0:
            raise ValueError(f"sigma_f must be positive, got {self.sigma_f}")
        if not np.all(ls > 0):
            raise ValueError(f"lengthscales must be positive, got {ls}")
        if not self.sigma_n >= 0:
            raise ValueError(f"sigma_n must be non-negative, got {self.sigma_n}")

    def inv_ls(self, dim):
        ls = self.lengthscales
        if ls.size == 1:
            return np.full(dim, 1.0 / ls[0])
        if ls.size != dim:
            raise ValueError(f"{ls.size} lengthscales for {dim}-dimensional inputs")
        return 1.0 / ls

    def to_log(self):
        return np.log(np.concatenate([[self.sigma_f], self.lengthscales, [self.sigma_n]]))

    @classmethod
    def from_log(cls, theta):
        theta = np.exp(np.asarray(theta, dtype=float))
        return cls(theta[0], theta[1:-1], theta[-1])


def _as_inputs(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError(f"expected a nonempty (M, d) input array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("inputs contain non-finite values")
    return X


def se_kernel(a, b, hyper):
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    r = (a - b) * hyper.inv_ls(a.size)
    return hyper.sigma_f**2 * np.exp(-0.5 * np.dot(r, r))


def cross_cov(A, B, hyper):
    """Kernel matrix ``k(A_i, B_j)`` without noise."""
    A = _as_inputs(A)
    B = _as_inputs(B)
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    d2 = _kernels.sq_dists(A, B, hyper.inv_ls(A.shape[1]))
    return hyper.sigma_f**2 * np.exp(-0.5 * d2)


def gram(X, hyper):
    X = _as_inputs(X)
    K = cross_cov(X, X, hyper)
    K[np.diag_indices_from(K)] += hyper.sigma_n**2
    return K


def chol_factor(K):
    """Lower Cholesky factor of ``K``, retrying with growing diagonal jitter.

    Returns ``(L, jitter)`` where ``jitter`` is the absolute amount added.
    """
    K = np.asarray(K, dtype=float)
    try:
        return scipy.linalg.cholesky(K, lower=True, check_finite=False), 0.0
    except np.linalg.LinAlgError:
        pass
    scale = float(np.mean(np.diag(K)))
    if not np.isfinite(scale) or scale <= 0:
        raise NotPositiveDefiniteError("matrix diagonal is not positive", jitter=0.0)
    rel = JITTER_START
    eye = np.eye(K.shape[0])
    while rel <= JITTER_MAX * (1 + 1e-12):
        jitter = rel * scale
        try:
            return scipy.linalg.cholesky(K + jitter * eye, lower=True, check_finite=False), jitter
        except np.linalg.LinAlgError:
            rel *= 10.0
    raise NotPositiveDefiniteError(
        f"Cholesky failed with jitter up to {JITTER_MAX * scale:.3e}",
        jitter=JITTER_MAX * scale,
    )


def chol_solve(K, B):
    L, _ = chol_factor(K)
    return scipy.linalg.cho_solve((L, True), np.asarray(B, dtype=float), check_finite=False)


def _nlml_from_chol(L, Y):
    alpha = scipy.linalg.cho_solve((L, True), Y, check_finite=False)
    return (
        0.5 * Y @ alpha
        + np.sum(np.log(np.diag(L)))
        + 0.5 * Y.size * LOG_2PI
    )


def nlml(hyper, X, Y):
    Y = np.asarray(Y, dtype=float).ravel()
    L, _ = chol_factor(gram(X, hyper))
    return float(_nlml_from_chol(L, Y))


@dataclass(frozen=True)
class GPPosterior:
    X: np.ndarray
    Y: np.ndarray
    hyper: SEHyper
    L: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    jitter: float = 0.0

    @classmethod
    def fit(cls, X, Y, hyper):
        X = _as_inputs(X)
        Y = np.asarray(Y, dtype=float).ravel()
        if Y.size != X.shape[0]:
            raise ValueError(f"{X.shape[0]} inputs but {Y.size} targets")
        L, jitter = chol_factor(gram(X, hyper))
        alpha = scipy.linalg.cho_solve((L, True), Y, check_finite=False)
        return cls(X, Y, hyper, L, alpha, jitter)

    @property
    def dim(self):
        return self.X.shape[1]

    def _check(self, Xs):
        Xs = np.asarray(Xs, dtype=float)
        if Xs.ndim == 1:
            Xs = Xs[None, :] if self.dim > 1 or Xs.size == 1 else Xs[:, None]
        if Xs.shape[1] != self.dim:
            raise ValueError(f"query dimension {Xs.shape[1]} != training dimension {self.dim}")
        return Xs

    def predict(self, Xs, return_var=True):
        """Posterior mean (and variance) at each row of ``Xs``."""
        Xs = self._check(Xs)
        Ks = cross_cov(Xs, self.X, self.hyper)
        mean = Ks @ self.alpha
        if not return_var:
            return mean
        v = scipy.linalg.solve_triangular(self.L, Ks.T, lower=True, check_finite=False)
        var = self.hyper.sigma_f**2 - np.einsum("ij,ij->j", v, v)
        return mean, _clamp_var(var)


def _clamp_var(var):
    var = np.asarray(var, dtype=float)
    return np.where(var < 0, 0.0, var)


def posterior(x_star, gp):
    x_star = np.atleast_1d(np.asarray(x_star, dtype=float))
    if x_star.size != gp.dim:
        raise ValueError(f"query dimension {x_star.size} != training dimension {gp.dim}")
    mean, var = gp.predict(x_star[None, :])
    return float(mean[0]), float(var[0])


# ---------------------------------------------------------------------------
# optimization


@dataclass
class RestartResult:
    x0: np.ndarray
    x: np.ndarray
    fun: float
    nfev: int
    trace: list


def minimize_restarts(fun, x0, log_bounds, restarts=5, seed=0, maxiter=500):
    """Nelder-Mead in log-parameter space from ``x0`` plus seeded random starts.

    ``log_bounds`` is a ``(P, 2)`` array. Parameters with ``lo == hi`` are held
    fixed. Returns ``(best_x, best_fun, results)``.
    """
    log_bounds = np.asarray(log_bounds, dtype=float)
    lo, hi = log_bounds[:, 0], log_bounds[:, 1]
    free = hi > lo
    rng = np.random.default_rng(seed)

    starts = [np.clip(np.asarray(x0, dtype=float), lo, hi)]
    for _ in range(restarts - 1):
        s = starts[0].copy()
        s[free] = rng.uniform(lo[free], hi[free])
        starts.append(s)

    def expand(z, base):
        x = base.copy()
        x[free] = z
        return x

    results = []
    for s in starts:
        trace = []

        def obj(z, s=s, trace=trace):
            try:
                f = float(fun(expand(z, s)))
            except (np.linalg.LinAlgError, FloatingPointError, ValueError):
                f = np.inf
            if not np.isfinite(f):
                f = np.inf
            best = trace[-1] if trace else np.inf
            trace.append(min(best, f))
            return f

        f0 = obj(s[free])
        if not free.any():
            results.append(RestartResult(s, s, f0, 1, trace))
            continue
        with np.errstate(invalid="ignore"):  # inf - inf in the simplex spread test
            res = scipy.optimize.minimize(
                obj,
                s[free],
                method="Nelder-Mead",
                bounds=list(zip(lo[free], hi[free])),
                options={"maxiter": maxiter, "xatol": 1e-3, "fatol": 1e-4},
            )
        x, f = expand(res.x, s), float(res.fun)
        if not f <= f0:  # never return something worse than the start
            x, f = s, f0
        results.append(RestartResult(s, x, f, res.nfev + 1, trace))

    finite = [r for r in results if np.isfinite(r.fun)]
    if not finite:
        raise OptimizationError("all optimizer restarts failed to factorize")
    best = min(finite, key=lambda r: r.fun)
    return best.x, best.fun, results


def optimize_hyper(X, Y, init, bounds, restarts=5, seed=0, maxiter=500):
    """Minimize :func:`nlml` over log-hyperparameters.

    ``bounds`` lists ``(lo, hi)`` for ``[sigma_f, *lengthscales, sigma_n]``.
    """
    X = _as_inputs(X)
    Y = np.asarray(Y, dtype=float).ravel()
    bounds = np.asarray(bounds, dtype=float)
    n_par = 2 + init.lengthscales.size
    if bounds.shape != (n_par, 2) or np.any(bounds <= 0) or np.any(bounds[:, 1] < bounds[:, 0]):
        raise ValueError(f"need {n_par} positive (lo, hi) bounds, got {bounds.tolist()}")

    def fun(theta):
        return nlml(SEHyper.from_log(theta), X, Y)

    x0 = SEHyper(init.sigma_f, init.lengthscales, max(init.sigma_n, bounds[-1, 0])).to_log()
    best, _, _ = minimize_restarts(fun, x0, np.log(bounds), restarts, seed, maxiter)
    return SEHyper.from_log(best)
