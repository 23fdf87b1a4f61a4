"""Stage-1 learning: per-dimension field GPs over (t, z), their time
derivatives, spatial upsampling, and the derivative dataset."""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ExtrapolationWarning, NotTrainedError
from .gp import GPPosterior, SEHyper, _clamp_var, cross_cov, optimize_hyper


@dataclass(frozen=True)
class ObservationSet:
    """Rectangular samples ``values[l, i, j] = x_l(t_i, z_j)``."""

    times: np.ndarray
    z: np.ndarray
    values: np.ndarray
    u: np.ndarray = None
    names: tuple = ("p", "q")

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        z = np.asarray(self.z, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.size < 2 or z.size < 2:
            raise ValueError("need at least 2 times and 2 spatial points")
        if v.ndim != 3 or v.shape[1:] != (t.size, z.size):
            raise ValueError(f"values shape {v.shape} != (n, {t.size}, {z.size})")
        u = np.zeros((t.size, 0)) if self.u is None else np.asarray(self.u, dtype=float).reshape(t.size, -1)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "u", u)
        if len(self.names) != v.shape[0]:
            object.__setattr__(self, "names", tuple(f"x{l}" for l in range(v.shape[0])))

    @property
    def n_dims(self):
        return self.values.shape[0]


def strided_indices(n_times, stride):
    if stride < 1:
        raise ValueError("stride must be >= 1")
    return np.arange(0, n_times, stride)


@dataclass(frozen=True)
class FieldGP:
    gps: tuple
    offsets: np.ndarray
    t_range: tuple
    names: tuple = ("p", "q")

    @property
    def n_dims(self):
        return len(self.gps)

    def _gp(self, l):
        if not self.gps or self.gps[l] is None:
            raise NotTrainedError("field GP has not been trained")
        return self.gps[l]

    def mean(self, t, z, l):
        """Posterior mean of dimension ``l``, shaped like ``t`` and ``z`` broadcast."""
        gp = self._gp(l)
        m = gp.predict(_tz(t, z), return_var=False) + self.offsets[l]
        return m.reshape(_shape(t, z))

    def mean_var(self, t, z, l):
        gp = self._gp(l)
        m, v = gp.predict(_tz(t, z))
        return (m + self.offsets[l]).reshape(_shape(t, z)), v.reshape(_shape(t, z))


def _shape(t, z):
    return np.broadcast(np.asarray(t), np.asarray(z)).shape


def _tz(t, z):
    t, z = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(z, dtype=float))
    return np.column_stack([t.ravel(), z.ravel()])


def _min_gap(a):
    u = np.unique(a)
    return float(np.min(np.diff(u))) if u.size > 1 else 1.0


def default_field_bounds(t, z, y):
    scale = float(np.std(y)) or 1.0
    dt, dz = _min_gap(t), _min_gap(z)
    span_t = float(np.ptp(t)) or 1.0
    span_z = float(np.ptp(z)) or 1.0
    return np.array(
        [
            [1e-2 * scale, 1e2 * scale],
            [0.25 * dt, 10.0 * span_t],
            [0.25 * dz, 10.0 * span_z],
            [1e-4 * scale, 1.0 * scale],
        ]
    )


def fit_field_gps(obs, stride=1, bounds=None, seed=0, restarts=5, maxiter=500):
    """One SE GP per state dimension over strided ``(t_i, z_j)`` pairs.

    Targets are centred by their mean, which the GP adds back at prediction.
    ``bounds`` is a callable ``(t, z, y) -> (4, 2)`` array or a fixed array;
    defaults scale with the data.
    """
    idx = strided_indices(obs.times.size, stride)
    if idx.size == 0:
        raise ValueError("strided observation set is empty")
    T, Z = np.meshgrid(obs.times[idx], obs.z, indexing="ij")
    X = np.column_stack([T.ravel(), Z.ravel()])
    gps, offsets = [], []
    for l in range(obs.n_dims):
        y = obs.values[l][idx].ravel()
        off = float(np.mean(y))
        yc = y - off
        b = bounds(X[:, 0], X[:, 1], yc) if callable(bounds) else (
            default_field_bounds(X[:, 0], X[:, 1], yc) if bounds is None else np.asarray(bounds, dtype=float)
        )
        sd = float(np.std(yc)) or 1.0
        # x0 gets clipped into the bounds by the optimizer
        init = SEHyper(sd, [2.0 * _min_gap(X[:, 0]), _min_gap(obs.z)], 1e-2 * sd)
        hyper = optimize_hyper(X, yc, init, b, restarts=restarts, seed=seed + l, maxiter=maxiter)
        gps.append(GPPosterior.fit(X, yc, hyper))
        offsets.append(off)
    t_range = (float(obs.times[idx].min()), float(obs.times[idx].max()))
    return FieldGP(tuple(gps), np.array(offsets), t_range, obs.names)


def time_derivative(fgp, t, z, l):
    """Posterior mean and variance of ``dx_l/dt`` at ``(t, z)`` (vectorized)."""
    gp = fgp._gp(l)
    Xs = _tz(t, z)
    h = gp.hyper
    phi_t2 = h.lengthscales[0] ** 2
    K = cross_cov(Xs, gp.X, h)
    dK = -((Xs[:, :1] - gp.X[None, :, 0]) / phi_t2) * K
    mean = dK @ gp.alpha
    v = scipy.linalg.solve_triangular(gp.L, dK.T, lower=True, check_finite=False)
    var = h.sigma_f**2 / phi_t2 - np.einsum("ij,ij->j", v, v)
    shape = _shape(t, z)
    return mean.reshape(shape), _clamp_var(var).reshape(shape)


def upsample(fgp, fine, t):
    """Posterior means of every dimension on ``fine``'s nodes at time ``t``.

    Returns an ``(n_dims, fine.N)`` array.
    """
    lo, hi = fgp.t_range
    pad = min(gp.hyper.lengthscales[0] for gp in fgp.gps)
    if t < lo - pad or t > hi + pad:
        warnings.warn(
            f"querying t = {t} outside observed range [{lo}, {hi}] +- {pad:.3g}",
            ExtrapolationWarning,
            stacklevel=2,
        )
    z = fine.nodes
    return np.stack([fgp.mean(np.full_like(z, t), z, l) for l in range(fgp.n_dims)])


@dataclass(frozen=True)
class DerivativeDataset:
    """Stacked states ``X``, derivatives ``Xdot`` and variances ``V``; one row
    per snapshot, each row laid out dimension-major on the learning grid."""

    grid: object
    times: np.ndarray
    X: np.ndarray
    Xdot: np.ndarray
    V: np.ndarray = None
    U: np.ndarray = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Xd = np.atleast_2d(np.asarray(self.Xdot, dtype=float))
        V = np.zeros_like(X) if self.V is None else np.atleast_2d(np.asarray(self.V, dtype=float))
        U = np.zeros((X.shape[0], 0)) if self.U is None else np.asarray(self.U, dtype=float).reshape(X.shape[0], -1)
        t = np.asarray(self.times, dtype=float).ravel()
        if not (X.shape == Xd.shape == V.shape) or t.size != X.shape[0]:
            raise ValueError("X, Xdot, V and times must describe the same snapshots")
        if X.shape[1] != 2 * self.grid.N:
            raise ValueError(f"rows of length {X.shape[1]} do not fit a {self.grid.N}-node grid")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Xd)) and np.all(np.isfinite(V))):
            raise ValueError("dataset contains non-finite entries")
        if np.any(V < 0):
            raise ValueError("variances must be non-negative")
        for name, a in (("times", t), ("X", X), ("Xdot", Xd), ("V", V), ("U", U)):
            a = a.copy()
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def __len__(self):
        return self.X.shape[0]

    def subset(self, idx):
        idx = np.asarray(idx)
        return DerivativeDataset(self.grid, self.times[idx], self.X[idx], self.Xdot[idx], self.V[idx], self.U[idx])


def build_dataset(fgp, learn, snapshot_times, u=None):
    times = np.atleast_1d(np.asarray(snapshot_times, dtype=float))
    if times.size == 0:
        raise ValueError("no snapshot times given")
    lo, hi = fgp.t_range
    if times.min() < lo - 1e-12 or times.max() > hi + 1e-12:
        raise ValueError(f"snapshot times must lie in the observed range [{lo}, {hi}]")
    z = learn.nodes
    M, N = times.size, learn.N
    T = np.repeat(times, N)
    Zq = np.tile(z, M)
    X = np.empty((M, fgp.n_dims * N))
    Xd = np.empty_like(X)
    V = np.empty_like(X)
    for l in range(fgp.n_dims):
        X[:, l * N : (l + 1) * N] = fgp.mean(T, Zq, l).reshape(M, N)
        m, v = time_derivative(fgp, T, Zq, l)
        Xd[:, l * N : (l + 1) * N] = m.reshape(M, N)
        V[:, l * N : (l + 1) * N] = v.reshape(M, N)
    return DerivativeDataset(learn, times, X, Xd, V, u)
