"""Model directory format.

``meta.json`` holds the format version, grid, hyperparameters, structure spec,
flags and the shape of every array; each array is a separate file of raw
little-endian float64 values in row-major order.
"""

import json
import os
from pathlib import Path

import numpy as np

from .errors import ModelFormatError
from .grid import make_grid
from .model import DphsHyper, TrainedModel
from .operators import structure_from_spec
from .pipeline import DerivativeDataset

FORMAT_VERSION = 1
_DTYPE = np.dtype("<f8")

_ARRAYS = {
    "X": lambda m: m.dataset.X,
    "Xdot": lambda m: m.dataset.Xdot,
    "V": lambda m: m.dataset.V,
    "U": lambda m: m.dataset.U,
    "times": lambda m: m.dataset.times,
    "chol": lambda m: m.L,
    "alpha": lambda m: m.alpha,
    "noise": lambda m: m.noise,
}


def save_model(model, path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    shapes = {}
    for name, get in _ARRAYS.items():
        a = np.ascontiguousarray(get(model), dtype=_DTYPE)
        shapes[name] = list(a.shape)
        tmp = path / f".{name}.f64.tmp"
        a.tofile(tmp)
        os.replace(tmp, path / f"{name}.f64")
    h = model.hyper
    meta = {
        "format_version": FORMAT_VERSION,
        "grid": {"L": model.grid.L, "N": model.grid.N},
        "structure": model.structure.spec(),
        "theta_names": list(model.structure.theta_names),
        "hyper": {
            "theta": [float(v) for v in h.theta],
            "phi": h.phi,
            "sigma_f": h.sigma_f,
            "sigma_n": h.sigma_n,
        },
        "flags": {"use_stage1_var": bool(model.use_stage1_var)},
        "jitter": float(model.jitter),
        "arrays": shapes,
    }
    (path / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def _read_array(path, name, shape):
    f = path / f"{name}.f64"
    if not f.is_file():
        raise ModelFormatError(f"missing array file {f.name}")
    expected = int(np.prod(shape)) * _DTYPE.itemsize
    size = f.stat().st_size
    if size != expected:
        raise ModelFormatError(f"{f.name}: {size} bytes on disk, expected {expected}")
    return np.fromfile(f, dtype=_DTYPE).reshape(shape)


def load_model(path):
    path = Path(path)
    try:
        meta = json.loads((path / "meta.json").read_text())
    except FileNotFoundError:
        raise ModelFormatError(f"no meta.json in {path}") from None
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"corrupt meta.json: {exc}") from None
    if meta.get("format_version") != FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported model format {meta.get('format_version')!r} (expected {FORMAT_VERSION})"
        )
    try:
        grid = make_grid(meta["grid"]["L"], meta["grid"]["N"])
        structure = structure_from_spec(grid, meta["structure"])
        h = meta["hyper"]
        hyper = DphsHyper(h["theta"], h["phi"], h["sigma_f"], h["sigma_n"])
        arr = {name: _read_array(path, name, tuple(shape)) for name, shape in meta["arrays"].items()}
        missing = set(_ARRAYS) - set(arr)
        if missing:
            raise ModelFormatError(f"meta.json does not declare arrays {sorted(missing)}")
        dataset = DerivativeDataset(grid, arr["times"], arr["X"], arr["Xdot"], arr["V"], arr["U"])
        A = structure.flow_map(hyper.theta)
        n = dataset.X.size
        if arr["chol"].shape != (n, n) or arr["alpha"].shape != (n,) or arr["noise"].shape != (n,):
            raise ModelFormatError("factor and weight arrays do not match the dataset size")
        if not np.all(np.isfinite(arr["chol"])) or not np.all(np.isfinite(arr["alpha"])):
            raise ModelFormatError("non-finite values in stored factor or weights")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"invalid model directory {path}: {exc}") from exc
    return TrainedModel(
        dataset,
        structure,
        hyper,
        A,
        arr["chol"],
        arr["alpha"],
        arr["noise"],
        meta["flags"]["use_stage1_var"],
        meta.get("jitter", 0.0),
    )
