"""End-to-end string experiment: data generation, learning, forecasting and
metrics. The CLI is a thin layer over these functions."""

import time

import numpy as np

from .grid import make_grid, resample_values
from .model import DphsBounds, posterior_grad_h, posterior_vector_field, sample_hamiltonian, train
from .operators import string_structure
from .pipeline import ObservationSet, build_dataset, fit_field_gps, strided_indices
from .solver import (
    GradHProvider,
    StressCurve,
    integrate,
    initial_condition,
    make_rhs,
    simulate_string,
    true_grad_h,
    true_stress,
)


def stress_curve(cfg):
    return StressCurve(cfg.sigma0, cfg.dsigma, cfg.kappa)


def grids(cfg):
    return (
        make_grid(cfg.length, cfg.n_fine),
        make_grid(cfg.length, cfg.n_learn),
        make_grid(cfg.length, cfg.n_eval),
    )


def observation_points(cfg):
    return np.linspace(0.0, cfg.length, cfg.n_obs)


def observe(traj, z):
    """Sample p and q of a trajectory at spatial points ``z``."""
    zn = traj.grid.nodes
    p = np.stack([np.interp(z, zn, row) for row in traj.p])
    q = np.stack([np.interp(z, zn, row) for row in traj.q])
    return ObservationSet(traj.times, z, np.stack([p, q]))


def simulate_ground_truth(cfg, ic=None, duration=None):
    """Fine-grid truth, its energy audit, and the sparse observations."""
    fine, _, _ = grids(cfg)
    traj, audit = simulate_string(
        stress_curve(cfg),
        fine,
        cfg.damping,
        ic or cfg.train_ic,
        duration or cfg.duration,
        cfg.record_dt,
        substeps=cfg.sim_substeps,
    )
    return traj, audit, observe(traj, observation_points(cfg))


def snapshot_times(cfg, obs):
    idx = strided_indices(obs.times.size, cfg.stride)[: cfg.n_snapshots]
    return obs.times[idx]


def learn_dataset(cfg, obs, seed=None):
    seed = cfg.seed if seed is None else seed
    _, learn, _ = grids(cfg)
    fgp = fit_field_gps(obs, cfg.stride, seed=seed, restarts=cfg.field_restarts, maxiter=cfg.maxiter)
    return fgp, build_dataset(fgp, learn, snapshot_times(cfg, obs))


def structure_for(cfg):
    _, learn, _ = grids(cfg)
    return string_structure(learn, effort_weights=cfg.effort_weights)


def train_model(cfg, dataset, seed=None):
    seed = cfg.seed if seed is None else seed
    bounds = DphsBounds(
        phi=tuple(cfg.phi_bounds),
        sigma_f=tuple(cfg.sigma_f_bounds),
        sigma_n=tuple(cfg.sigma_n_bounds),
        theta=np.array([cfg.damping_bounds]),
    )
    return train(
        dataset,
        structure_for(cfg),
        bounds,
        restarts=cfg.restarts,
        seed=seed,
        maxiter=cfg.maxiter,
        use_stage1_var=cfg.use_stage1_var,
    )


# ---------------------------------------------------------------------------
# forecasting


def mean_provider(model):
    return GradHProvider(model.effort_mean, "posterior-mean")


def sample_provider(sample):
    return GradHProvider(sample.effort, "sample")


def forecast(model, provider, ic, cfg):
    """Integrate the learned dPHS on the learning grid from ``ic``."""
    x0 = initial_condition(ic, model.grid) if isinstance(ic, str) else ic
    f = make_rhs(provider, model.structure, model.hyper.theta)
    return integrate(f, x0, cfg.predict_duration, cfg.predict_dt, substeps=cfg.predict_substeps)


def sample_energy(sample, traj):
    return np.array([sample.value(x) for x in traj.states])


def dissipation_fraction(energy, rtol=1e-10):
    """Fraction of recorded steps on which ``energy`` did not increase."""
    scale = max(1.0, float(np.max(np.abs(energy))))
    return float(np.mean(np.diff(energy) <= rtol * scale))


def draw_samples(model, cfg, seed=None, count=None):
    seed = cfg.seed if seed is None else seed
    count = cfg.samples if count is None else count
    return [sample_hamiltonian(model, (seed, k), cfg.n_features) for k in range(count)]


# ---------------------------------------------------------------------------
# metrics


def horizon_slice(times, horizon):
    return times <= horizon + 1e-9


def relative_errors(pred, truth, horizon):
    """Relative Frobenius error over ``t <= horizon`` and per-slice L2 errors,
    both on the truth's grid."""
    pred = pred.resample(truth.grid)
    n = min(len(pred), len(truth))
    if not np.allclose(pred.times[:n], truth.times[:n]):
        raise ValueError("prediction and truth are recorded at different times")
    P, T = pred.states[:n], truth.states[:n]
    m = horizon_slice(truth.times[:n], horizon)
    rel = float(np.linalg.norm(P[m] - T[m]) / np.linalg.norm(T[m]))
    norms = np.linalg.norm(T, axis=1)
    slices = np.linalg.norm(P - T, axis=1) / np.where(norms > 0, norms, 1.0)
    return rel, slices


def heldout_states(cfg, truth):
    """Training-trajectory states midway between snapshots, resampled to the
    learning grid, with their true time derivatives."""
    _, learn, _ = grids(cfg)
    half = max(1, cfg.stride // 2)
    idx = strided_indices(len(truth), cfg.stride)[: cfg.n_snapshots] + half
    idx = idx[idx < len(truth)]
    structure = string_structure(truth.grid)
    f = make_rhs(GradHProvider(lambda x: true_grad_h(x, stress_curve(cfg))), structure, [cfg.damping])
    fine_states = truth.states[idx]
    derivs = np.stack([f(0.0, x) for x in fine_states])
    return (
        truth.times[idx],
        resample_values(fine_states, truth.grid, learn),
        resample_values(derivs, truth.grid, learn),
    )


def coverage95(model, states, derivs):
    """Fraction of entries of the true derivative inside the 95% predictive
    band; entries the structure pins to zero are skipped."""
    active = np.any(model.A != 0, axis=1)
    hits, total = 0, 0
    for x, xd in zip(states, derivs):
        m, C = posterior_vector_field(model, x)
        sd = np.sqrt(np.clip(np.diag(C), 0.0, None) + model.hyper.sigma_n**2)
        inside = np.abs(xd - m) <= 1.959963984540054 * sd
        hits += int(np.sum(inside[active]))
        total += int(np.sum(active))
    return hits / total if total else float("nan")


def vector_field_error(model, states, derivs):
    pred = np.stack([model.A @ model.grad_mean(x) for x in states])
    return float(np.linalg.norm(pred - derivs) / np.linalg.norm(derivs))


def grad_h_surface(model, states, curve, with_band=False):
    """Learned q-effort vs ``s(q) q`` at each node of each state."""
    N = model.grid.N
    scale = model.structure.effort_scale()[N:]
    q = states[:, N:]
    learned = np.stack([model.effort_mean(x)[N:] for x in states])
    truth = true_stress(q, curve) * q
    if not with_band:
        return q, truth, learned
    sd = np.stack([scale * np.sqrt(np.diag(posterior_grad_h(model, x)[1])[N:]) for x in states])
    return q, truth, learned, sd


METRIC_KEYS = (
    "rel_err_spacetime",
    "rel_err_slices",
    "gradH_rmse",
    "coverage95",
    "theta_recovered",
    "wall_clock_s",
)


def empty_metrics():
    return {
        "rel_err_spacetime": None,
        "rel_err_slices": [],
        "gradH_rmse": None,
        "coverage95": None,
        "theta_recovered": {},
        "wall_clock_s": {},
    }


class Stopwatch:
    def __init__(self):
        self.laps = {}

    def __call__(self, name):
        sw = self

        class _Lap:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                sw.laps[name] = sw.laps.get(name, 0.0) + time.perf_counter() - self.t0

        return _Lap()


def gradh_rmse(model, states, curve):
    _, truth, learned = grad_h_surface(model, states, curve)
    return float(np.sqrt(np.mean((learned - truth) ** 2)))


def surface_states(cfg, truth_test):
    """Test-trajectory states at the stride spacing, on the learning grid."""
    _, learn, _ = grids(cfg)
    idx = strided_indices(len(truth_test), cfg.stride)
    return resample_values(truth_test.states[idx], truth_test.grid, learn)


def evaluate_metrics(cfg, truth_test, pred, model=None, truth_train=None):
    """Metrics dict with the fixed key set.

    Without a model only the trajectory errors are filled in; without the
    training trajectory the coverage statistic is skipped.
    """
    out = empty_metrics()
    rel, slices = relative_errors(pred, truth_test, cfg.eval_horizon)
    out["rel_err_spacetime"] = rel
    out["rel_err_slices"] = slices.tolist()
    if model is None:
        return out
    out["gradH_rmse"] = gradh_rmse(model, surface_states(cfg, truth_test), stress_curve(cfg))
    if truth_train is not None:
        _, states, derivs = heldout_states(cfg, truth_train)
        out["coverage95"] = coverage95(model, states, derivs)
    out["theta_recovered"] = dict(zip(model.structure.theta_names, map(float, model.hyper.theta)))
    return out


# ---------------------------------------------------------------------------
# data-efficiency sweep


def sweep_subset(n_total, size, seed):
    """Sorted random temporal subset of ``size`` snapshot indices."""
    if not 1 <= size <= n_total:
        raise ValueError(f"subset size {size} outside [1, {n_total}]")
    rng = np.random.default_rng([seed, size])
    return np.sort(rng.choice(n_total, size=size, replace=False))


def sweep_entry(cfg, dataset, size, seed, heldout, truth_test=None):
    """Train on a temporal subset and score it. Errors are reported, not raised."""
    row = {"size": size, "seed": seed, "vf_error": np.nan, "rel_err_spacetime": np.nan,
           "theta": np.nan, "nlml": np.nan, "status": "ok"}
    try:
        sub = dataset.subset(sweep_subset(len(dataset), size, seed))
        model = train_model(cfg, sub, seed=seed)
        _, states, derivs = heldout
        row["vf_error"] = vector_field_error(model, states, derivs)
        row["theta"] = float(model.hyper.theta[0])
        row["nlml"] = float(model.report["nlml"])
        if truth_test is not None:
            pred = forecast(model, mean_provider(model), cfg.test_ic, cfg)
            row["rel_err_spacetime"] = relative_errors(pred, truth_test, cfg.eval_horizon)[0]
    except (np.linalg.LinAlgError, FloatingPointError, RuntimeError, ValueError) as exc:
        row["status"] = f"{type(exc).__name__}: {exc}"
    return row


def sweep_medians(rows, key="vf_error"):
    """Median of ``key`` per size over successful rows."""
    out = {}
    for size in sorted({r["size"] for r in rows}):
        vals = [r[key] for r in rows if r["size"] == size and r["status"] == "ok" and np.isfinite(r[key])]
        out[size] = float(np.median(vals)) if vals else float("nan")
    return out


def run_sweep(cfg, dataset, truth_train, truth_test=None, sizes=None, seeds=None, workers=1):
    sizes = list(cfg.sweep_sizes if sizes is None else sizes)
    seeds = list(cfg.sweep_seeds if seeds is None else seeds)
    heldout = heldout_states(cfg, truth_train)
    jobs = [(s, sd) for s in sizes for sd in seeds]
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(lambda j: sweep_entry(cfg, dataset, j[0], j[1], heldout, truth_test), jobs))
    else:
        rows = [sweep_entry(cfg, dataset, s, sd, heldout, truth_test) for s, sd in jobs]
    return rows
