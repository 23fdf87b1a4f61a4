"""Run-directory CSV and JSON helpers.

Floats are written with 17 significant digits so every float64 round-trips
exactly.
"""

import json
import math
from pathlib import Path

import numpy as np

from .errors import RunFileError
from .grid import Trajectory, make_grid

FLOAT_FMT = "%.17g"


def write_csv(path, header, columns):
    cols = [np.asarray(c, dtype=float).ravel() for c in columns]
    if len({c.size for c in cols}) > 1:
        raise ValueError("columns differ in length")
    data = np.column_stack(cols) if cols else np.empty((0, 0))
    np.savetxt(path, data, fmt=FLOAT_FMT, delimiter=",", header=",".join(header), comments="")


def read_csv(path, header=None):
    """Columns of a numeric CSV as a dict ``{name: array}``."""
    path = Path(path)
    if not path.is_file():
        raise RunFileError(f"missing {path}")
    with open(path) as fh:
        names = fh.readline().strip().split(",")
    if header is not None and names[: len(header)] != list(header):
        raise RunFileError(f"{path.name}: expected columns {list(header)}, found {names}")
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise RunFileError(f"{path.name}: {exc}") from None
    if data.size and data.shape[1] != len(names):
        raise RunFileError(f"{path.name}: {data.shape[1]} columns but {len(names)} names")
    return {n: (data[:, i] if data.size else np.empty(0)) for i, n in enumerate(names)}


def write_long(path, times, z, p, q):
    """Long format ``t,z,p,q``: time-major, one row per (time, node)."""
    T, Z = np.meshgrid(times, z, indexing="ij")
    write_csv(path, ("t", "z", "p", "q"), (T, Z, p, q))


def read_long(path):
    """Inverse of :func:`write_long`: ``(times, z, p, q)`` with ``(T, N)`` fields."""
    cols = read_csv(path, ("t", "z", "p", "q"))
    t, z = cols["t"], cols["z"]
    times = np.unique(t)
    nodes = np.unique(z)
    n = times.size * nodes.size
    if n == 0 or t.size != n:
        raise RunFileError(f"{Path(path).name} is not a full time x node table")
    shape = (times.size, nodes.size)
    if not (np.array_equal(t.reshape(shape)[:, 0], times) and np.array_equal(z.reshape(shape)[0], nodes)):
        raise RunFileError(f"{Path(path).name} rows are not time-major")
    return times, nodes, cols["p"].reshape(shape), cols["q"].reshape(shape)


def write_trajectory(path, traj):
    write_long(path, traj.times, traj.grid.nodes, traj.p, traj.q)


def read_trajectory(path):
    times, z, p, q = read_long(path)
    grid = make_grid(float(z[-1] - z[0]), z.size)
    if not np.allclose(grid.nodes, z - z[0], rtol=0, atol=1e-9 * max(1.0, grid.L)):
        raise RunFileError(f"{Path(path).name}: nodes are not uniformly spaced")
    return Trajectory(grid, times, np.hstack([p, q]))


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path, obj):
    Path(path).write_text(json.dumps(_json_safe(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")


def read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise RunFileError(f"missing {path}") from None
    except json.JSONDecodeError as exc:
        raise RunFileError(f"corrupt {path.name}: {exc}") from None
