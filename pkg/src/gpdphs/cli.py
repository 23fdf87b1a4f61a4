"""``gpdphs`` command line: simulate, train, predict, evaluate, sweep, plot.

Every command reads the config (packaged defaults overlaid by ``--config``)
and works inside one run directory. Exit codes: 0 ok, 2 config, 3 numerical
failure, 4 io.
"""

import argparse
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


def thread_cap():
    raw = os.environ.get("GPDPHS_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        raise ValueError(f"GPDPHS_THREADS must be a positive integer, got {raw!r}")
    return n


# ---------------------------------------------------------------------------
# commands


def _record_time(run, name, seconds):
    from .files import read_json, write_json

    path = run / "timings.json"
    t = read_json(path) if path.is_file() else {}
    t[name] = seconds
    write_json(path, t)


def cmd_simulate(cfg, run, workers):
    import time

    from . import experiment as ex
    from .files import write_csv, write_long, write_trajectory

    t0 = time.perf_counter()
    traj, audit, obs = ex.simulate_ground_truth(cfg)
    (run / "timings.json").unlink(missing_ok=True)  # a new simulation starts a new run
    _record_time(run, "simulate", time.perf_counter() - t0)
    write_trajectory(run / "truth.csv", traj)
    write_long(run / "observations.csv", obs.times, obs.z, obs.values[0], obs.values[1])
    write_csv(run / "energy.csv", ("t", "E"), (audit.times, audit.energy))
    n_up = int(audit.increases().sum())
    print(f"simulated {len(traj)} records on {traj.grid.N} nodes; "
          f"energy {audit.energy[0]:.6g} -> {audit.energy[-1]:.6g} ({n_up} increases)")


def _observations(run):
    import numpy as np

    from .files import read_long
    from .pipeline import ObservationSet

    times, z, p, q = read_long(run / "observations.csv")
    return ObservationSet(times, z, np.stack([p, q]))


def cmd_train(cfg, run, workers):
    import time

    from . import experiment as ex
    from .files import write_json
    from .model_io import save_model

    obs = _observations(run)
    t0 = time.perf_counter()
    fgp, dataset = ex.learn_dataset(cfg, obs)
    t1 = time.perf_counter()
    model = ex.train_model(cfg, dataset)
    t2 = time.perf_counter()
    save_model(model, run / "model")
    report = dict(model.report)
    report["theta_recovered"] = dict(zip(model.structure.theta_names, model.hyper.theta))
    report["hyper"] = {
        "theta": list(model.hyper.theta),
        "phi": model.hyper.phi,
        "sigma_f": model.hyper.sigma_f,
        "sigma_n": model.hyper.sigma_n,
    }
    report["seed"] = cfg.seed
    report["jitter"] = model.jitter
    report["stage1"] = [
        {"name": n, "sigma_f": gp.hyper.sigma_f, "lengthscales": gp.hyper.lengthscales,
         "sigma_n": gp.hyper.sigma_n, "offset": off}
        for n, gp, off in zip(fgp.names, fgp.gps, fgp.offsets)
    ]
    write_json(run / "train_report.json", report)
    _record_time(run, "stage1", t1 - t0)
    _record_time(run, "stage2", t2 - t1)
    r = ", ".join(f"{k} = {v:.4g}" for k, v in report["theta_recovered"].items())
    print(f"trained on {len(dataset)} snapshots: nlml {model.report['nlml']:.6g}, {r}")


def cmd_predict(cfg, run, workers, ic=None, samples=None):
    import time

    import numpy as np

    from . import experiment as ex
    from .errors import GridMismatchError, NumericalBlowupError
    from .files import write_csv, write_json, write_trajectory
    from .model_io import load_model

    model = load_model(run / "model")
    if model.grid.N != cfg.n_learn or not np.isclose(model.grid.L, cfg.length):
        raise GridMismatchError(
            f"model grid (L = {model.grid.L}, N = {model.grid.N}) does not match the config "
            f"(length = {cfg.length}, n_learn = {cfg.n_learn})"
        )
    ic = ic or cfg.test_ic
    samples = cfg.samples if samples is None else samples
    if samples < 0:
        raise ValueError("samples must be >= 0")
    _, _, eval_grid = ex.grids(cfg)
    for old in run.glob("pred_s*_*.csv"):
        old.unlink()
    for old in run.glob("pred_energy_*.csv"):
        old.unlink()

    t0 = time.perf_counter()
    mean = ex.forecast(model, ex.mean_provider(model), ic, cfg)
    write_trajectory(run / "pred_mean.csv", mean.resample(eval_grid))

    draws = ex.draw_samples(model, cfg, count=samples)

    def one(k):
        try:
            traj = ex.forecast(model, ex.sample_provider(draws[k]), ic, cfg)
        except NumericalBlowupError as exc:
            return k, None, None, exc.last_time
        return k, traj, ex.sample_energy(draws[k], traj), None

    if workers > 1 and samples > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(min(workers, samples)) as pool:
            results = list(pool.map(one, range(samples)))
    else:
        results = [one(k) for k in range(samples)]

    report = {"ic": ic, "samples": samples, "blowups": {}, "dissipation_fraction": {}}
    for k, traj, energy, last in results:
        if traj is None:
            report["blowups"][str(k)] = last
            continue
        write_trajectory(run / f"pred_sample_{k}.csv", traj.resample(eval_grid))
        write_csv(run / f"pred_energy_{k}.csv", ("t", "E"), (traj.times, energy))
        report["dissipation_fraction"][str(k)] = ex.dissipation_fraction(energy)
    write_json(run / "predict_report.json", report)
    _record_time(run, "predict", time.perf_counter() - t0)
    ok = samples - len(report["blowups"])
    print(f"predicted from '{ic}': mean + {ok}/{samples} samples")


def cmd_evaluate(cfg, run, workers):
    import time

    from . import experiment as ex
    from .files import read_json, read_trajectory, write_csv, write_json, write_trajectory
    from .model_io import load_model

    t0 = time.perf_counter()
    model = load_model(run / "model")
    pred = read_trajectory(run / "pred_mean.csv")
    truth_train = read_trajectory(run / "truth.csv")
    ic = read_json(run / "predict_report.json")["ic"]
    fine, _, _ = ex.grids(cfg)
    truth_test, _ = ex.simulate_string(
        ex.stress_curve(cfg), fine, cfg.damping, ic, cfg.predict_duration, cfg.record_dt,
        substeps=cfg.sim_substeps,
    )
    write_trajectory(run / "truth_test.csv", truth_test)
    metrics = ex.evaluate_metrics(cfg, truth_test, pred, model, truth_train)

    q, true_e, learned, sd = ex.grad_h_surface(
        model, ex.surface_states(cfg, truth_test), ex.stress_curve(cfg), with_band=True
    )
    write_csv(run / "surface.csv", ("q", "true", "learned", "sd"), (q, true_e, learned, sd))
    _record_time(run, "evaluate", time.perf_counter() - t0)
    metrics["wall_clock_s"] = read_json(run / "timings.json")
    write_json(run / "metrics.json", metrics)
    cov = metrics["coverage95"]
    print(f"rel_err_spacetime {metrics['rel_err_spacetime']:.4g}, gradH_rmse {metrics['gradH_rmse']:.4g}, "
          f"coverage95 {cov:.3f}")


def cmd_sweep(cfg, run, workers):
    from . import experiment as ex
    from .files import read_trajectory

    obs = _observations(run)
    truth_train = read_trajectory(run / "truth.csv")
    _, dataset = ex.learn_dataset(cfg, obs)
    fine, _, _ = ex.grids(cfg)
    truth_test, _ = ex.simulate_string(
        ex.stress_curve(cfg), fine, cfg.damping, cfg.test_ic, cfg.predict_duration, cfg.record_dt,
        substeps=cfg.sim_substeps,
    )
    rows = ex.run_sweep(cfg, dataset, truth_train, truth_test, workers=workers)
    med = ex.sweep_medians(rows)
    med_rel = ex.sweep_medians(rows, "rel_err_spacetime")
    lines = ["size,seed,vf_error,rel_err_spacetime,theta,nlml,status"]
    fmt = "{:.17g}".format
    for r in rows:
        status = r["status"].replace(",", ";").replace("\n", " ")
        lines.append(",".join([str(r["size"]), str(r["seed"]), fmt(r["vf_error"]),
                               fmt(r["rel_err_spacetime"]), fmt(r["theta"]), fmt(r["nlml"]), status]))
    for s in med:
        lines.append(",".join([str(s), "median", fmt(med[s]), fmt(med_rel[s]), "nan", "nan", "ok"]))
    (run / "sweep.csv").write_text("\n".join(lines) + "\n")
    failed = sum(r["status"] != "ok" for r in rows)
    summary = ", ".join(f"{s}: {v:.4g}" for s, v in med.items())
    print(f"sweep medians (vf_error) {summary}; {failed} failed entries")


def read_sweep(path):
    from .errors import RunFileError

    path = Path(path)
    if not path.is_file():
        raise RunFileError(f"missing {path}")
    rows = []
    for line in path.read_text().splitlines()[1:]:
        size, seed, vf, rel, theta, nlml, status = line.split(",", 6)
        rows.append({"size": int(size), "seed": seed, "vf_error": float(vf),
                     "rel_err_spacetime": float(rel), "theta": float(theta),
                     "nlml": float(nlml), "status": status})
    return rows


def cmd_plot(cfg, run, workers):
    import numpy as np

    from . import plots
    from .files import read_csv, read_trajectory

    truth = read_trajectory(run / "truth_test.csv")
    mean = read_trajectory(run / "pred_mean.csv")
    sample_files = sorted(run.glob("pred_sample_*.csv"), key=lambda p: int(p.stem.rsplit("_", 1)[1]))
    samples = [read_trajectory(p) for p in sample_files]
    grid = mean.grid
    n = min(len(truth), len(mean), *(len(s) for s in samples))
    truth_d = truth.resample(grid).deflection()[:n]
    plots.trajectory_figure(
        run / "trajectory.svg",
        grid.nodes,
        mean.times[:n],
        truth_d,
        mean.deflection()[:n],
        [s.deflection()[:n] for s in samples],
    )
    surf = read_csv(run / "surface.csv", ("q", "true", "learned", "sd"))
    plots.surface_figure(run / "hamiltonian_surface.svg", surf["q"], surf["true"], surf["learned"], surf["sd"])
    written = ["trajectory.svg", "hamiltonian_surface.svg"]
    if (run / "sweep.csv").is_file():
        rows = read_sweep(run / "sweep.csv")
        per_seed = [r for r in rows if r["seed"] != "median"]
        med = {r["size"]: r["vf_error"] for r in rows if r["seed"] == "median"}
        plots.error_figure(
            run / "error_vs_data.svg",
            np.array([r["size"] for r in per_seed], dtype=float),
            np.array([r["vf_error"] for r in per_seed]),
            med,
        )
        written.append("error_vs_data.svg")
    else:
        print("no sweep.csv; skipping error_vs_data.svg", file=sys.stderr)
    print("wrote " + ", ".join(written))


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "plot": cmd_plot,
}


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="gpdphs", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=list(COMMANDS))
    p.add_argument("--config", help="TOML file overriding the packaged defaults")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="run directory (default: config 'out')")
    p.add_argument("--ic", help="predict: initial condition kind (default: config test_ic)")
    p.add_argument("--samples", type=int, help="predict: number of pathwise samples")
    return p


def _fail(code, msg):
    print(f"gpdphs: {msg}", file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        workers = thread_cap()
    except ValueError as exc:
        return _fail(EXIT_CONFIG, exc)

    from threadpoolctl import threadpool_limits

    import numpy as np

    from .config import ConfigError, load_config
    from .errors import (
        GridMismatchError,
        ModelFormatError,
        NotPositiveDefiniteError,
        NumericalBlowupError,
        OptimizationError,
    )

    try:
        cfg = load_config(args.config, seed=args.seed)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except OSError as exc:
        return _fail(EXIT_IO, f"cannot read config: {exc}")

    run = Path(args.out or cfg.out)
    try:
        run.mkdir(parents=True, exist_ok=True)
        if not os.access(run, os.W_OK):
            raise PermissionError(f"run directory {run} is not writable")
    except OSError as exc:
        return _fail(EXIT_IO, exc)

    kw = {}
    if args.command == "predict":
        kw = {"ic": args.ic, "samples": args.samples}
    try:
        with threadpool_limits(limits=workers), np.errstate(over="ignore", invalid="ignore"):
            COMMANDS[args.command](cfg, run, workers, **kw)
    except (ConfigError, GridMismatchError) as exc:
        return _fail(EXIT_CONFIG, exc)
    except (NumericalBlowupError, NotPositiveDefiniteError, OptimizationError) as exc:
        return _fail(EXIT_NUMERICAL, f"{type(exc).__name__}: {exc}")
    except (OSError, ModelFormatError) as exc:
        return _fail(EXIT_IO, f"{type(exc).__name__}: {exc}")
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        return _fail(EXIT_NUMERICAL, f"{type(exc).__name__}: {exc}")
    except ValueError as exc:
        return _fail(EXIT_CONFIG, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
