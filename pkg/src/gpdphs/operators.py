"""Discrete interconnection and dissipation operators on a 1-D grid.

The first-derivative matrix is the classical second-order SBP operator
``D = H^{-1} Q`` with ``H = dz * diag(1/2, 1, ..., 1, 1/2)`` and
``Q + Q^T = diag(-1, 0, ..., 0, 1)``, so the block operator built from it is
skew-adjoint in the ``H``-weighted inner product up to boundary terms.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from .grid import SpatialGrid


@dataclass(frozen=True)
class DiffMatrix:
    grid: SpatialGrid
    D: np.ndarray = field(repr=False)

    def apply(self, u):
        return _kernels.sbp_apply(np.ascontiguousarray(u, dtype=float), 1.0 / self.grid.dz)


def sbp_norm(grid):
    return np.diag(grid.weights)


def sbp_boundary(N):
    B = np.zeros((N, N))
    B[0, 0] = -1.0
    B[-1, -1] = 1.0
    return B


def diff_matrix_sbp(grid):
    if grid.N < 3:
        raise ValueError("SBP difference matrix needs N >= 3")
    N, h = grid.N, grid.dz
    D = np.zeros((N, N))
    i = np.arange(1, N - 1)
    D[i, i + 1] = 0.5 / h
    D[i, i - 1] = -0.5 / h
    D[0, 0], D[0, 1] = -1.0 / h, 1.0 / h
    D[-1, -2], D[-1, -1] = -1.0 / h, 1.0 / h
    D.setflags(write=False)
    return DiffMatrix(grid, D)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OperatorStructure:
    """Known structure of ``J``, ``R`` and ``G`` up to parameters ``theta``.

    ``effort_weights`` selects the discrete variational derivative:
    ``"uniform"`` divides the gradient by ``dz`` everywhere, ``"trapezoid"``
    divides by the SBP norm weights (``dz/2`` at the end nodes).
    ``dirichlet`` lists stacked indices whose flow and effort are pinned to 0.
    """

    grid: SpatialGrid
    kind: str
    theta_names: tuple
    theta_bounds: np.ndarray
    theta_init: np.ndarray
    j_builder: Callable = field(repr=False)
    r_builder: Callable = field(repr=False)
    g_builder: Callable = field(repr=False)
    n_inputs: int = 0
    dirichlet: tuple = ()
    effort_weights: str = "trapezoid"

    @property
    def dim(self):
        return 2 * self.grid.N

    def J(self, theta):
        return self.j_builder(np.asarray(theta, dtype=float))

    def R(self, theta):
        return self.r_builder(np.asarray(theta, dtype=float))

    def a0(self, theta):
        """Discrete ``J - R``."""
        return self.J(theta) - self.R(theta)

    def G(self, theta):
        return self.g_builder(np.asarray(theta, dtype=float))

    def effort_scale(self):
        w = np.concatenate([self.grid.weights] * 2)
        if self.effort_weights == "uniform":
            return np.full(self.dim, 1.0 / self.grid.dz)
        if self.effort_weights == "trapezoid":
            return 1.0 / w
        raise ValueError(f"unknown effort weighting {self.effort_weights!r}")

    def projection(self):
        """Diagonal of the projector that zeroes the Dirichlet entries."""
        P = np.ones(self.dim)
        P[list(self.dirichlet)] = 0.0
        return P

    def port_map(self, theta):
        """``P (J - R) P``: maps efforts to flows with Dirichlet rows and
        columns removed."""
        P = self.projection()
        return P[:, None] * self.a0(theta) * P[None, :]

    def flow_map(self, theta):
        """Constant linear map from the Euclidean gradient of the discrete
        Hamiltonian to the state derivative."""
        return self.port_map(theta) * self.effort_scale()[None, :]

    def spec(self):
        return {"kind": self.kind, "effort_weights": self.effort_weights}


def string_structure(grid, effort_weights="trapezoid", dirichlet=True):
    """``[[-r I, D], [D, 0]]`` with one unknown damping ``r`` and no input."""
    D = diff_matrix_sbp(grid).D
    N = grid.N
    Z = np.zeros((N, N))
    J = np.block([[Z, D], [D, Z]])
    J.setflags(write=False)
    eye_p = np.zeros((2 * N, 2 * N))
    eye_p[:N, :N] = np.eye(N)

    return OperatorStructure(
        grid=grid,
        kind="string",
        theta_names=("r",),
        theta_bounds=np.array([[1e-4, 1.0]]),
        theta_init=np.array([0.1]),
        j_builder=lambda theta: J,
        r_builder=lambda theta: theta[0] * eye_p,
        g_builder=lambda theta: np.zeros((2 * N, 0)),
        n_inputs=0,
        dirichlet=(0, N - 1) if dirichlet else (),
        effort_weights=effort_weights,
    )


STRUCTURES = {"string": string_structure}


def structure_from_spec(grid, spec):
    kind = spec.get("kind")
    if kind not in STRUCTURES:
        raise ValueError(f"unknown operator structure {kind!r}")
    return STRUCTURES[kind](grid, effort_weights=spec.get("effort_weights", "trapezoid"))


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SkewReport:
    deviation: float
    location: tuple
    eig_floor: float
    tol: float = 1e-10

    @property
    def skew_ok(self):
        return self.deviation < self.tol

    @property
    def dissipation_ok(self):
        return self.eig_floor > -self.tol

    @property
    def passed(self):
        return self.skew_ok and self.dissipation_ok


def check_skew(structure, theta, tol=1e-10):
    """Check ``H2 J + J^T H2`` vanishes away from boundary nodes and that the
    symmetric part of ``R`` is positive semidefinite."""
    grid = structure.grid
    H2 = np.concatenate([grid.weights] * 2)
    J = structure.J(theta)
    S = H2[:, None] * J + J.T * H2[None, :]
    node = np.arange(structure.dim) % grid.N
    interior = (node > 0) & (node < grid.N - 1)
    masked = np.where(interior[:, None] & interior[None, :], np.abs(S), 0.0)
    loc = np.unravel_index(np.argmax(masked), masked.shape)
    R = structure.R(theta)
    floor = float(np.linalg.eigvalsh(0.5 * (R + R.T)).min())
    return SkewReport(float(masked[loc]), tuple(int(i) for i in loc), floor, tol)


def variational_derivative(gradient, grid, weights="uniform"):
    """Discrete functional derivative of ``H ~ sum_i w_i * density_i``."""
    g = np.asarray(gradient, dtype=float)
    if g.shape[-1] != 2 * grid.N:
        raise ValueError(f"gradient length {g.shape[-1]} != 2*N = {2 * grid.N}")
    if weights == "uniform":
        return g / grid.dz
    if weights == "trapezoid":
        return g / np.concatenate([grid.weights] * 2)
    raise ValueError(f"unknown weighting {weights!r}")
