"""Nonlinear string ground truth and a method-of-lines integrator."""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.integrate
import scipy.interpolate
import scipy.special

from .errors import NumericalBlowupError
from .grid import SpatialGrid, StackedState, Trajectory, stack
from .operators import string_structure


@dataclass(frozen=True)
class StressCurve:
    """Sigmoid stress/strain law ``s(q) = sigma0 + dsigma * logistic(kappa q)``."""

    sigma0: float = 0.2
    dsigma: float = 1.8
    kappa: float = 4.0

    def __post_init__(self):
        if not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")
        if not self.dsigma >= 0:
            raise ValueError("dsigma must be non-negative")


def true_stress(q, curve):
    return curve.sigma0 + curve.dsigma * scipy.special.expit(curve.kappa * np.asarray(q, dtype=float))


def true_grad_h(state, curve):
    """Effort ``(p, s(q) q)`` of the density ``p^2/2 + W(q)``."""
    v = state.values if isinstance(state, StackedState) else np.asarray(state, dtype=float)
    n = v.shape[-1] // 2
    out = np.empty_like(v)
    out[..., :n] = v[..., :n]
    q = v[..., n:]
    out[..., n:] = true_stress(q, curve) * q
    return out


class StrainEnergy:
    """``W(q) = int_0^q s(x) x dx`` tabulated by adaptive quadrature.

    Each cell of a uniform q-table is integrated with ``scipy.integrate.quad``
    and the cumulative sums are interpolated with a cubic Hermite spline whose
    slopes are the exact integrand. The table grows when queried outside it.
    """

    def __init__(self, curve, qmax=4.0, n=2001, tol=1e-10):
        self.curve = curve
        self.n = n
        self.tol = tol
        self._build(qmax)

    def _build(self, qmax):
        def f(x):
            return float(true_stress(x, self.curve)) * x

        qs = np.linspace(-qmax, qmax, self.n)
        cells = np.array(
            [scipy.integrate.quad(f, a, b, epsabs=self.tol, epsrel=self.tol)[0] for a, b in zip(qs[:-1], qs[1:])]
        )
        cum = np.concatenate([[0.0], np.cumsum(cells)])
        cum -= cum[self.n // 2]  # W(0) = 0; the middle node is q = 0
        self.qmax = qmax
        self._spline = scipy.interpolate.CubicHermiteSpline(qs, cum, true_stress(qs, self.curve) * qs)

    def __call__(self, q):
        q = np.asarray(q, dtype=float)
        m = float(np.max(np.abs(q))) if q.size else 0.0
        if m > self.qmax:
            self._build(max(2.0 * self.qmax, 1.1 * m))
        return self._spline(q)


@dataclass(frozen=True)
class EnergyAudit:
    times: np.ndarray
    energy: np.ndarray
    power: np.ndarray = field(repr=False)

    def relative_drift(self):
        return float(np.max(np.abs(self.energy - self.energy[0])) / abs(self.energy[0]))

    def increases(self, tol=1e-10):
        """Boolean mask of recorded steps where energy rose by more than
        ``tol * E(0)``."""
        return np.diff(self.energy) > tol * abs(self.energy[0])


def discrete_energy(traj, curve, W=None):
    W = W or StrainEnergy(curve)
    w = traj.grid.weights
    dens = 0.5 * traj.p**2 + W(traj.q)
    return dens @ w


def energy_audit(traj, curve, r=0.0):
    """Trapezoid energy ``sum_i h_i (p_i^2/2 + W(q_i))`` and its dissipation
    rate ``-r sum_i h_i p_i^2`` at each recorded state."""
    E = discrete_energy(traj, curve)
    power = -r * (traj.p**2 @ traj.grid.weights)
    return EnergyAudit(traj.times, E, power)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GradHProvider:
    """State -> effort map, tagged with where it came from."""

    fn: Callable
    tag: str = "ground-truth"

    def __call__(self, x):
        return self.fn(x)


def ground_truth_provider(curve):
    return GradHProvider(lambda x: true_grad_h(x, curve), "ground-truth")


def make_rhs(gradh, structure, theta, u=None):
    """Right-hand side ``P (J - R) P e(x) + G u`` as a callable ``f(t, x)``.

    ``e`` is the effort returned by ``gradh``; the string structure applies
    its interconnection through the banded SBP stencil instead of a dense
    matvec.
    """
    theta = np.asarray(theta, dtype=float)
    P = structure.projection()
    G = structure.G(theta)
    gu = G @ np.asarray(u, dtype=float) if (u is not None and G.shape[1]) else None
    if structure.kind == "string":
        from .operators import diff_matrix_sbp

        Dm = diff_matrix_sbp(structure.grid)
        N = structure.grid.N
        r = theta[0]

        def rhs(t, x):
            e = P * gradh(x)
            out = np.empty_like(e)
            out[:N] = -r * e[:N] + Dm.apply(e[N:])
            out[N:] = Dm.apply(e[:N])
            out *= P
            if gu is not None:
                out += gu
            return out

    else:
        M = structure.port_map(theta)

        def rhs(t, x):
            out = M @ gradh(x)
            if gu is not None:
                out += gu
            return out

    return rhs


def rhs(state, gradh, structure, theta, u=None):
    x = state.values if isinstance(state, StackedState) else np.asarray(state, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NumericalBlowupError("non-finite state passed to rhs")
    return make_rhs(gradh, structure, theta, u)(0.0, x)


def _rk4_step(f, t, x, h):
    k1 = f(t, x)
    k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = f(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


BLOWUP_FACTOR = 1e8


def integrate(f, x0, t_end, dt, method="rk4", substeps=1, grid=None, blowup=BLOWUP_FACTOR):
    """Integrate ``x' = f(t, x)`` and record the state every ``dt``.

    ``rk4`` takes ``substeps`` fixed steps of ``dt/substeps`` between records;
    ``rk45`` uses an adaptive Dormand-Prince solver with atol 1e-8, rtol 1e-6.
    A record that is non-finite or exceeds ``blowup * max(1, max|x0|)`` in
    magnitude raises NumericalBlowupError.
    """
    if not dt > 0 or not t_end > 0:
        raise ValueError("dt and t_end must be positive")
    if isinstance(x0, StackedState):
        grid = x0.grid
        x0 = x0.values
    if grid is None:
        raise ValueError("grid is required when x0 is a bare array")
    x = np.array(x0, dtype=float)
    n_rec = int(round(t_end / dt))
    times = np.arange(n_rec + 1) * dt
    limit = blowup * max(1.0, float(np.max(np.abs(x)))) if x.size else np.inf

    def bad(y):
        return not np.all(np.isfinite(y)) or np.max(np.abs(y)) > limit

    if method == "rk4":
        h = dt / substeps
        out = np.empty((n_rec + 1, x.size))
        out[0] = x
        t = 0.0
        for k in range(1, n_rec + 1):
            for s in range(substeps):
                x = _rk4_step(f, t, x, h)
                t = (k - 1) * dt + (s + 1) * h
            if bad(x):
                raise NumericalBlowupError(
                    f"state blew up after t = {times[k - 1]:.6g}", last_time=times[k - 1]
                )
            out[k] = x
    elif method == "rk45":
        sol = scipy.integrate.solve_ivp(
            f, (0.0, times[-1]), x, method="RK45", t_eval=times, atol=1e-8, rtol=1e-6
        )
        if sol.status != 0 or bad(sol.y):
            last = sol.t[-1] if sol.t.size else 0.0
            raise NumericalBlowupError(f"RK45 failed: {sol.message}", last_time=last)
        out = sol.y.T
    else:
        raise ValueError(f"unknown method {method!r}")
    return Trajectory(grid, times, out)


# ---------------------------------------------------------------------------


def initial_condition(kind, grid):
    """Deflection-derived ICs: ``p0 = 0`` and ``q0 = dx0/dz``."""
    z = grid.nodes
    if kind == "gauss-bump":
        q = -2.0 * (z - 5.0) * np.exp(-((z - 5.0) ** 2))
    elif kind == "sine":
        q = (10.0 / np.pi) * np.cos(10.0 * z / np.pi)
    else:
        raise ValueError(f"unknown initial condition {kind!r}")
    return stack(np.zeros(grid.N), q, grid)


def initial_deflection(kind, z):
    z = np.asarray(z, dtype=float)
    if kind == "gauss-bump":
        return np.exp(-((z - 5.0) ** 2))
    if kind == "sine":
        return np.sin(10.0 * z / np.pi)
    raise ValueError(f"unknown initial condition {kind!r}")


def simulate_string(curve, grid, r, ic, duration, dt, substeps=10, method="rk4"):
    """Integrate the damped nonlinear string from ``ic`` on ``grid``."""
    structure = string_structure(grid)
    f = make_rhs(ground_truth_provider(curve), structure, [r])
    x0 = initial_condition(ic, grid) if isinstance(ic, str) else ic
    traj = integrate(f, x0, duration, dt, method=method, substeps=substeps)
    return traj, energy_audit(traj, curve, r)
