"""Uniform 1-D grids, stacked (p, q) states and trajectories."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform grid of ``N`` nodes on ``[0, L]``."""

    L: float
    N: int

    def __post_init__(self):
        if not np.isfinite(self.L) or self.L <= 0:
            raise ValueError(f"grid length must be positive, got {self.L}")
        if int(self.N) != self.N or self.N < 3:
            raise ValueError(f"grid needs at least 3 nodes, got {self.N}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "L", float(self.L))

    @property
    def dz(self):
        return self.L / (self.N - 1)

    @property
    def nodes(self):
        return np.arange(self.N) * self.dz

    @property
    def weights(self):
        """Trapezoid quadrature weights, i.e. the diagonal of the SBP norm."""
        w = np.full(self.N, self.dz)
        w[0] = w[-1] = 0.5 * self.dz
        return w


def make_grid(L, N):
    return SpatialGrid(L, N)


@dataclass(frozen=True)
class StackedState:
    """State vector laid out as ``[p_0..p_{N-1}, q_0..q_{N-1}]``."""

    grid: SpatialGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (2 * self.grid.N,):
            raise ValueError(
                f"state length {v.shape} does not match 2*N = {2 * self.grid.N}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("state contains non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def p(self):
        return self.values[: self.grid.N]

    @property
    def q(self):
        return self.values[self.grid.N :]


def stack(p, q, grid):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != (grid.N,) or q.shape != (grid.N,):
        raise ValueError(
            f"p and q must both have length {grid.N}, got {p.shape} and {q.shape}"
        )
    return StackedState(grid, np.concatenate([p, q]))


def unstack(state):
    return state.p.copy(), state.q.copy()


def resample(state, target):
    """Piecewise-linear transfer of p and q onto ``target``'s nodes."""
    src = state.grid
    if not np.isclose(src.L, target.L, rtol=1e-12, atol=0.0):
        raise ValueError(f"domain lengths differ: {src.L} vs {target.L}")
    if src == target:
        return state
    return StackedState(target, resample_values(state.values, src, target))


def resample_values(values, src, target):
    """Array form of :func:`resample`; ``values`` may be ``(..., 2*src.N)``."""
    values = np.asarray(values, dtype=float)
    if src.N == target.N:
        return values.copy()
    zs, zt = src.nodes, target.nodes
    # np.interp clips at the ends; guard against last-node rounding
    zt = np.clip(zt, 0.0, zs[-1])
    flat = values.reshape(-1, 2 * src.N)
    out = np.empty((flat.shape[0], 2 * target.N))
    for k, row in enumerate(flat):
        out[k, : target.N] = np.interp(zt, zs, row[: src.N])
        out[k, target.N :] = np.interp(zt, zs, row[src.N :])
    return out.reshape(values.shape[:-1] + (2 * target.N,))


@dataclass(frozen=True)
class Trajectory:
    """Time-indexed stacked states on a common grid.

    ``states`` is stored as a ``(T, 2N)`` array; :meth:`state` wraps a row.
    """

    grid: SpatialGrid
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        s = np.array(self.states, dtype=float)
        if t.ndim != 1 or s.shape != (t.size, 2 * self.grid.N):
            raise ValueError(
                f"states shape {s.shape} incompatible with {t.size} times "
                f"on a {self.grid.N}-node grid"
            )
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        t.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", s)

    def __len__(self):
        return self.times.size

    def state(self, k):
        return StackedState(self.grid, self.states[k])

    @property
    def p(self):
        return self.states[:, : self.grid.N]

    @property
    def q(self):
        return self.states[:, self.grid.N :]

    def resample(self, target):
        if target == self.grid:
            return self
        return Trajectory(
            target, self.times, resample_values(self.states, self.grid, target)
        )

    def deflection(self):
        """Cumulative trapezoid integral of q from the fixed left end."""
        q = self.q
        dz = self.grid.dz
        x = np.zeros_like(q)
        x[:, 1:] = np.cumsum(0.5 * dz * (q[:, 1:] + q[:, :-1]), axis=1)
        return x
