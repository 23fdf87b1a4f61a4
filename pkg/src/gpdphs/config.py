"""Run configuration: a flat TOML file layered over the packaged defaults."""

import dataclasses
from dataclasses import dataclass
from importlib import resources

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    length: float = 10.0
    n_fine: int = 401
    n_learn: int = 30
    n_eval: int = 400
    n_obs: int = 8
    duration: float = 20.0
    record_dt: float = 0.01
    sim_substeps: int = 10
    damping: float = 0.01
    sigma0: float = 0.2
    dsigma: float = 1.8
    kappa: float = 4.0
    train_ic: str = "gauss-bump"
    test_ic: str = "sine"
    stride: int = 50
    n_snapshots: int = 40
    field_restarts: int = 3
    restarts: int = 3
    maxiter: int = 500
    phi_bounds: tuple = (0.05, 50.0)
    sigma_f_bounds: tuple = (1e-3, 1e3)
    sigma_n_bounds: tuple = (1e-4, 1.0)
    damping_bounds: tuple = (1e-4, 1.0)
    use_stage1_var: bool = False
    effort_weights: str = "trapezoid"
    n_features: int = 1024
    samples: int = 5
    predict_dt: float = 0.01
    predict_substeps: int = 2
    predict_duration: float = 20.0
    eval_horizon: float = 5.0
    sweep_sizes: tuple = (10, 20, 40)
    sweep_seeds: tuple = (0, 1, 2)
    seed: int = 0
    out: str = "run"

    def __post_init__(self):
        for name in ("n_fine", "n_learn", "n_eval", "n_obs", "stride", "n_snapshots",
                     "sim_substeps", "predict_substeps", "restarts", "field_restarts"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.n_learn > self.n_eval:
            raise ConfigError("n_learn must not exceed n_eval")
        if min(self.n_fine, self.n_learn, self.n_eval) < 3:
            raise ConfigError("grids need at least 3 nodes")
        if self.n_obs < 2:
            raise ConfigError("need at least 2 observed columns")
        for name in ("length", "duration", "record_dt", "predict_dt", "predict_duration", "eval_horizon"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.samples < 0:
            raise ConfigError("samples must be >= 0")
        if list(self.sweep_sizes) != sorted(self.sweep_sizes):
            raise ConfigError("sweep_sizes must be ascending")

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def to_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self).items()}


def _coerce(raw):
    known = {f.name: f for f in dataclasses.fields(RunConfig)}
    unknown = set(raw) - set(known)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    out = {}
    for k, v in raw.items():
        default = known[k].default
        try:
            if isinstance(default, tuple):
                v = tuple(type(default[0])(x) for x in v)
            elif isinstance(default, bool):
                if not isinstance(v, bool):
                    raise TypeError
            else:
                v = type(default)(v)
        except (TypeError, ValueError):
            raise ConfigError(f"bad value for {k}: {v!r}") from None
        out[k] = v
    return out


def default_config_text():
    return resources.files("gpdphs").joinpath("data/default.toml").read_text()


def load_config(path=None, **overrides):
    raw = tomllib.loads(default_config_text())
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw.update(tomllib.load(fh))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**_coerce(raw))
