"""Physics-constrained GP over the Hamiltonian of a discretized dPHS.

A zero-mean SE GP prior is placed on the discrete Hamiltonian ``H(x)``,
``x`` the stacked learning-grid state. State derivatives are
``A grad H(x) + G u`` with ``A`` the structure's flow map, so the derivative
observations have covariance ``sigma_f^2 A Hk(x, x') A^T`` where ``Hk`` is the
cross-Hessian of the unit SE kernel.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _kernels
from .errors import GridMismatchError, NotTrainedError
from .gp import _nlml_from_chol, chol_factor, minimize_restarts


@dataclass(frozen=True)
class DphsHyper:
    theta: np.ndarray
    phi: float
    sigma_f: float
    sigma_n: float

    def __post_init__(self):
        th = np.atleast_1d(np.asarray(self.theta, dtype=float)).copy()
        th.setflags(write=False)
        object.__setattr__(self, "theta", th)
        for name in ("phi", "sigma_f", "sigma_n"):
            v = float(getattr(self, name))
            if not v > 0:
                raise ValueError(f"{name} must be positive, got {v}")
            object.__setattr__(self, name, v)

    def to_log(self):
        return np.log(np.concatenate([self.theta, [self.phi, self.sigma_f, self.sigma_n]]))

    @classmethod
    def from_log(cls, z, n_theta):
        v = np.exp(np.asarray(z, dtype=float))
        return cls(v[:n_theta], v[n_theta], v[n_theta + 1], v[n_theta + 2])


# ---------------------------------------------------------------------------
# kernel


def se_hessian(x, xp, phi):
    """Cross-Hessian ``d^2 k / dx dx'`` of the unit SE kernel."""
    r = np.asarray(x, dtype=float) - np.asarray(xp, dtype=float)
    k = np.exp(-0.5 * (r @ r) / phi**2)
    return k * (np.eye(r.size) / phi**2 - np.outer(r, r) / phi**4)


def kdphs_block(x, xp, hyper, A):
    """Covariance between ``A grad H(x)`` and ``A grad H(x')``."""
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    if x.shape != xp.shape or x.shape[-1] != A.shape[1]:
        raise GridMismatchError(f"states of shape {x.shape}, {xp.shape} do not match A {A.shape}")
    phi2 = hyper.phi**2
    r = x - xp
    k = np.exp(-0.5 * (r @ r) / phi2)
    Ar = A @ r
    return hyper.sigma_f**2 * ((k / phi2) * (A @ A.T) - (k / phi2**2) * np.outer(Ar, Ar))


def assemble_gram(X, hyper, A, noise_diag):
    """``K_dphs(X, X)`` in snapshot-major block order, and ``Lambda``."""
    X = np.ascontiguousarray(X, dtype=float)
    AX = np.ascontiguousarray(X @ A.T)
    AAt = np.ascontiguousarray(A @ A.T)
    K = _kernels.dphs_gram(X, AX, AAt, 1.0 / hyper.phi**2, hyper.sigma_f**2)
    return K, np.asarray(noise_diag, dtype=float)


def noise_diagonal(dataset, sigma_n, use_stage1_var=False):
    lam = np.full(dataset.X.size, sigma_n**2)
    if use_stage1_var:
        lam = lam + dataset.V.ravel()
    return lam


def _targets(dataset, G):
    y = dataset.Xdot.copy()
    if G.shape[1] and dataset.U.shape[1]:
        y = y - dataset.U @ G.T
    return y.ravel()


def median_distance(X):
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 2:
        return 1.0
    d = np.sqrt(_kernels.sq_dists(X, X, np.ones(X.shape[1])))
    iu = np.triu_indices(X.shape[0], 1)
    med = float(np.median(d[iu]))
    return med if med > 0 else 1.0


# ---------------------------------------------------------------------------
# trained model


@dataclass(frozen=True)
class TrainedModel:
    dataset: object
    structure: object
    hyper: DphsHyper
    A: np.ndarray = field(repr=False)
    L: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    noise: np.ndarray = field(repr=False)
    use_stage1_var: bool = False
    jitter: float = 0.0
    report: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def grid(self):
        return self.structure.grid

    @property
    def dim(self):
        return self.A.shape[1]

    @property
    def n_snapshots(self):
        return self.dataset.X.shape[0]

    def _weights(self, w):
        """Reshape flat weights to ``(M, 2N)`` and map them through ``A^T``."""
        return w.reshape(self.n_snapshots, self.dim) @ self.A

    def _check_state(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise GridMismatchError(
                f"state of length {x.shape[-1]} queried on a model with {self.dim} "
                f"state entries (learning grid N = {self.grid.N})"
            )
        return x

    def cross_blocks(self, x):
        """``C(x, X)``: covariance of ``grad H(x)`` with every observation,
        shape ``(2N, 2N*M)``."""
        X = self.dataset.X
        phi2 = self.hyper.phi**2
        R = x[None, :] - X
        k = np.exp(-0.5 * np.einsum("ij,ij->i", R, R) / phi2)
        AR = R @ self.A.T
        sf2 = self.hyper.sigma_f**2
        # C_j = sf2 * k_j (A^T/phi^2 - r_j (A r_j)^T/phi^4)
        C = (sf2 / phi2) * k[:, None, None] * self.A.T[None, :, :]
        C -= (sf2 / phi2**2) * k[:, None, None] * (R[:, :, None] * AR[:, None, :])
        return C.transpose(1, 0, 2).reshape(self.dim, -1)

    def grad_mean(self, x, weights=None):
        """Mean of ``grad H`` at ``x`` for flat data-space weights (default alpha).

        Equivalent to ``cross_blocks(x) @ weights`` but O(M N).
        """
        x = self._check_state(x)
        w = self.alpha if weights is None else weights
        X = self.dataset.X
        W = w.reshape(self.n_snapshots, self.dim)
        AtW = W @ self.A  # rows: A^T w_j
        phi2 = self.hyper.phi**2
        R = x[None, :] - X
        k = np.exp(-0.5 * np.einsum("ij,ij->i", R, R) / phi2)
        s = np.einsum("ij,ij->i", R @ self.A.T, W)
        sf2 = self.hyper.sigma_f**2
        return (sf2 / phi2) * (k @ AtW) - (sf2 / phi2**2) * ((k * s) @ R)

    def effort_mean(self, x):
        return self.structure.effort_scale() * self.grad_mean(x)

    def g_u(self, u=None):
        G = self.structure.G(self.hyper.theta)
        if u is None or G.shape[1] == 0:
            return np.zeros(self.dim)
        return G @ np.asarray(u, dtype=float)


def fit_model(dataset, structure, hyper, use_stage1_var=False, report=None):
    """Condition the dPHS GP on ``dataset`` at fixed hyperparameters."""
    if dataset.grid != structure.grid:
        raise GridMismatchError("dataset and operator structure use different grids")
    A = structure.flow_map(hyper.theta)
    lam = noise_diagonal(dataset, hyper.sigma_n, use_stage1_var)
    K, _ = assemble_gram(dataset.X, hyper, A, lam)
    K[np.diag_indices_from(K)] += lam
    L, jitter = chol_factor(K)
    y = _targets(dataset, structure.G(hyper.theta))
    alpha = scipy.linalg.cho_solve((L, True), y, check_finite=False)
    return TrainedModel(dataset, structure, hyper, A, L, alpha, lam, use_stage1_var, jitter, report or {})


def dphs_nlml(dataset, structure, hyper, use_stage1_var=False):
    A = structure.flow_map(hyper.theta)
    lam = noise_diagonal(dataset, hyper.sigma_n, use_stage1_var)
    K, _ = assemble_gram(dataset.X, hyper, A, lam)
    K[np.diag_indices_from(K)] += lam
    L, _ = chol_factor(K)
    return float(_nlml_from_chol(L, _targets(dataset, structure.G(hyper.theta))))


@dataclass(frozen=True)
class DphsBounds:
    """Multiplicative bounds relative to data-driven reference scales.

    ``phi`` is relative to the median pairwise snapshot distance, ``sigma_f``
    to the prior scale that matches the target variance, ``sigma_n`` to the
    target standard deviation. ``theta`` bounds default to the structure's.
    """

    phi: tuple = (0.05, 50.0)
    sigma_f: tuple = (1e-3, 1e3)
    sigma_n: tuple = (1e-4, 1.0)
    theta: np.ndarray = None


def reference_scales(dataset, structure):
    A = structure.flow_map(structure.theta_init)
    y = _targets(dataset, structure.G(structure.theta_init))
    ystd = float(np.std(y)) or 1.0
    phi0 = median_distance(dataset.X)
    gain = float(np.sqrt(np.mean(np.sum(A * A, axis=1)))) or 1.0
    return phi0, phi0 * ystd / gain, ystd


def hyper_dict(h):
    return {
        "theta": [float(v) for v in h.theta],
        "phi": h.phi,
        "sigma_f": h.sigma_f,
        "sigma_n": h.sigma_n,
    }


def train(dataset, structure, bounds=None, restarts=5, seed=0, maxiter=500, use_stage1_var=False):
    """Jointly fit ``(theta, phi, sigma_f, sigma_n)`` by NLML and condition.

    Restart 0 starts at the structure's ``theta_init``, the median-distance
    lengthscale and data-matched scales; the rest start log-uniformly.
    """
    if len(dataset) < 1:
        raise ValueError("dataset is empty")
    bounds = bounds or DphsBounds()
    phi0, sf0, sn_ref = reference_scales(dataset, structure)
    tb = structure.theta_bounds if bounds.theta is None else np.asarray(bounds.theta, dtype=float)
    box = np.vstack(
        [
            tb,
            [phi0 * bounds.phi[0], phi0 * bounds.phi[1]],
            [sf0 * bounds.sigma_f[0], sf0 * bounds.sigma_f[1]],
            [sn_ref * bounds.sigma_n[0], sn_ref * bounds.sigma_n[1]],
        ]
    )
    n_theta = tb.shape[0]
    init = DphsHyper(structure.theta_init, phi0, sf0, 0.1 * sn_ref)

    def fun(z):
        return dphs_nlml(dataset, structure, DphsHyper.from_log(z, n_theta), use_stage1_var)

    best, best_f, results = minimize_restarts(fun, init.to_log(), np.log(box), restarts, seed, maxiter)
    hyper = DphsHyper.from_log(best, n_theta)
    report = {
        "nlml": best_f,
        "bounds": box.tolist(),
        "restarts": [
            {
                "init": hyper_dict(DphsHyper.from_log(r.x0, n_theta)),
                "result": hyper_dict(DphsHyper.from_log(r.x, n_theta)),
                "nlml": r.fun,
                "nfev": r.nfev,
                "trace": r.trace,
            }
            for r in results
        ],
    }
    return fit_model(dataset, structure, hyper, use_stage1_var, report)


# ---------------------------------------------------------------------------
# posterior


def _require(model):
    if model is None or getattr(model, "L", None) is None:
        raise NotTrainedError("model has not been trained")


def _sym_clamp(S):
    S = 0.5 * (S + S.T)
    w, V = np.linalg.eigh(S)
    if w.min() >= 0:
        return S
    S = (V * np.clip(w, 0.0, None)) @ V.T
    return 0.5 * (S + S.T)


def prior_grad_cov(model):
    return (model.hyper.sigma_f**2 / model.hyper.phi**2) * np.eye(model.dim)


def posterior_grad_h(model, x):
    """Posterior mean and covariance of ``grad H`` at ``x``."""
    _require(model)
    x = model._check_state(x)
    C = model.cross_blocks(x)
    mean = C @ model.alpha
    v = scipy.linalg.solve_triangular(model.L, C.T, lower=True, check_finite=False)
    cov = prior_grad_cov(model) - v.T @ v
    return mean, _sym_clamp(cov)


def posterior_vector_field(model, x, u=None):
    """Posterior mean and covariance of the state derivative at ``x``."""
    _require(model)
    x = model._check_state(x)
    KxX = model.A @ model.cross_blocks(x)
    mean = model.g_u(u) + KxX @ model.alpha
    v = scipy.linalg.solve_triangular(model.L, KxX.T, lower=True, check_finite=False)
    Kxx = (model.hyper.sigma_f**2 / model.hyper.phi**2) * (model.A @ model.A.T)
    return mean, _sym_clamp(Kxx - v.T @ v)


# ---------------------------------------------------------------------------
# pathwise sampling


@dataclass(frozen=True)
class SampledHamiltonian:
    """One deterministic Hamiltonian drawn from the posterior.

    Random-feature prior draw plus the Matheron correction, so that
    ``A grad H_s`` matches the noisy derivative data in distribution.
    """

    model: TrainedModel = field(repr=False)
    omega: np.ndarray = field(repr=False)
    phase: np.ndarray = field(repr=False)
    amp: np.ndarray = field(repr=False)
    beta: np.ndarray = field(repr=False)
    seed: object = None

    @property
    def _scale(self):
        return self.model.hyper.sigma_f * np.sqrt(2.0 / self.omega.shape[0])

    def prior_value(self, x):
        return self._scale * (self.amp @ np.cos(self.omega @ x + self.phase))

    def prior_grad(self, x):
        x = np.asarray(x, dtype=float)
        s = np.sin(x @ self.omega.T + self.phase) * self.amp
        return -self._scale * (s @ self.omega)

    def value(self, x):
        x = self.model._check_state(x)
        m = self.model
        X = m.dataset.X
        phi2 = m.hyper.phi**2
        R = x[None, :] - X
        k = np.exp(-0.5 * np.einsum("ij,ij->i", R, R) / phi2)
        AtB = m._weights(self.beta)
        corr = (m.hyper.sigma_f**2 / phi2) * np.sum(k * np.einsum("ij,ij->i", R, AtB))
        return float(self.prior_value(x) + corr)

    def grad(self, x):
        x = self.model._check_state(x)
        return self.prior_grad(x) + self.model.grad_mean(x, self.beta)

    def effort(self, x):
        return self.model.structure.effort_scale() * self.grad(x)


def sample_hamiltonian(model, seed, n_features=1024):
    """Draw a pathwise posterior Hamiltonian.

    ``seed`` may be an int or a sequence such as ``(base_seed, sample_id)``;
    each yields an independent, reproducible stream.
    """
    _require(model)
    if n_features < 64:
        raise ValueError(f"need at least 64 random features, got {n_features}")
    rng = np.random.default_rng(seed)
    d = model.dim
    omega = rng.standard_normal((n_features, d)) / model.hyper.phi
    phase = rng.uniform(0.0, 2.0 * np.pi, n_features)
    amp = rng.standard_normal(n_features)
    eps = rng.standard_normal(model.noise.size) * np.sqrt(model.noise)
    draft = SampledHamiltonian(model, omega, phase, amp, np.zeros_like(model.alpha), seed)
    X = model.dataset.X
    prior_flow = draft.prior_grad(X) @ model.A.T
    y = _targets(model.dataset, model.structure.G(model.hyper.theta))
    beta = scipy.linalg.cho_solve((model.L, True), y - prior_flow.ravel() - eps, check_finite=False)
    return SampledHamiltonian(model, omega, phase, amp, beta, seed)
