"""Experiment configuration: flat dotted key-value files.

The format is line-oriented ``section.key = value`` text (comments with
``#``), chosen to keep experiment configs diff-friendly.  Unknown keys are
rejected.  Values are scalars or comma-separated lists.
"""

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .gpdata import ConfidenceParams
from .gpinfer import ScalarGpModel, fit_hyperparameters
from .kernels import KernelParams
from .runtime import MpcConfig
from .sampler import SamplerOptions
from .sqp import OcpDefinition, QuadraticStageCost
from .systems import (
    TrainingGridSpec,
    bicycle_spec,
    generate_training_data,
    obstacle_constraints,
    pendulum_spec,
)

# Schema: key (or regex) -> (kind, default).  kind in
# {int, float, bool, str, int_list, float_list}.  Required keys have
# default=None.
_SCHEMA = {
    "seed": ("int", 0),
    "out": ("str", "results"),
    "system.kind": ("str", None),
    "system.theta_box": ("str", "narrow"),
    "gp.noise_var": ("float", 1e-6),
    "gp.sqrt_beta": ("float", 2.5),
    "gp.failure_prob": ("float", 0.05),
    "gp.fit": ("bool", True),
    "grid.counts": ("int_list", [3, 3, 5]),
    "grid.lows": ("float_list", None),
    "grid.highs": ("float_list", None),
    "grid.noise_std": ("float", None),
    "grid.include_gradients": ("bool", False),
    "ocp.horizon": ("int", None),
    "ocp.samples": ("int", 20),
    "cost.q": ("float_list", None),
    "cost.r": ("float_list", None),
    "cost.x_ref": ("float_list", None),
    "cost.u_ref": ("float_list", None),
    "sqp.iters": ("int", 20),
    "mpc.iters": ("int", 2),
    "mpc.keep": ("int", 1),
    "mpc.steps": ("int", 50),
    "qp.soft": ("bool", True),
    "qp.slack_weight": ("float", 1e4),
    "qp.tol": ("float", 1e-8),
    "qp.max_iter": ("int", 100),
    "sampler.truncation": ("bool", True),
    "sampler.max_rejections": ("int", 100),
    "sampler.snap_tol": ("float", 1e-9),
    "sampler.freeze_var_factor": ("float", 4.0),
    "initial.state": ("float_list", None),
    "initial.input": ("float_list", None),
    "propagate.mc_samples": ("int", 1000),
    "propagate.projection": ("int_list", [0, 1]),
    "bench.samples": ("int_list", [5, 10, 20]),
    "bench.iters": ("int_list", [1, 2, 3]),
    "bench.repeats": ("int", 1),
    "bench.steps": ("int", 20),
}
_PATTERN_KEYS = [
    (re.compile(r"^gp\.dim(\d+)\.lengthscales$"), "float_list"),
    (re.compile(r"^gp\.dim(\d+)\.output_scale$"), "float"),
    (re.compile(r"^obstacles\.(\d+)$"), "float_list"),
]


def _convert(key, kind, raw):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.strip().lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        if kind == "str":
            return raw.strip()
        if kind == "int_list":
            return [int(v) for v in raw.split(",") if v.strip()]
        if kind == "float_list":
            return [float(v) for v in raw.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r} ({kind})") from exc
    raise ConfigError(f"unknown kind {kind}")


@dataclass
class ExperimentConfig:
    """Typed view of one experiment configuration file."""

    values: dict = field(default_factory=dict)
    hyper: dict = field(default_factory=dict)  # output dim -> (lengthscales, scale)
    obstacles: list = field(default_factory=list)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)


def parse_config(text):
    """Parse config text; rejects unknown keys and malformed lines."""
    values = {}
    hyper = {}
    obstacles = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key in _SCHEMA:
            kind, _ = _SCHEMA[key]
            if key in values:
                raise ConfigError(f"duplicate key {key!r}")
            values[key] = _convert(key, kind, raw)
            continue
        for pattern, kind in _PATTERN_KEYS:
            match = pattern.match(key)
            if match:
                idx = int(match.group(1))
                val = _convert(key, kind, raw)
                if key.startswith("obstacles."):
                    obstacles[idx] = val
                elif key.endswith("lengthscales"):
                    hyper.setdefault(idx, {})["lengthscales"] = val
                else:
                    hyper.setdefault(idx, {})["output_scale"] = val
                break
        else:
            raise ConfigError(f"unknown configuration key {key!r}")
    for idx, pair in obstacles.items():
        if len(pair) != 2:
            raise ConfigError(f"obstacles.{idx} must be 'x, y'")
    cfg = ExperimentConfig(values=values, hyper=hyper,
                           obstacles=[obstacles[i] for i in sorted(obstacles)])
    _apply_defaults(cfg)
    return cfg


def _apply_defaults(cfg):
    for key, (kind, default) in _SCHEMA.items():
        if key not in cfg.values:
            cfg.values[key] = default
    required = ["system.kind", "ocp.horizon", "cost.q", "cost.r", "initial.state"]
    missing = [k for k in required if cfg.values.get(k) is None]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    if cfg.values["system.kind"] not in ("pendulum", "bicycle"):
        raise ConfigError("system.kind must be 'pendulum' or 'bicycle'")


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


@dataclass
class ExperimentSetup:
    """Everything built from a config: system, data, models, OCP, MPC."""

    config: ExperimentConfig
    system: object
    dataset: object
    params: list
    models: list
    ocp: OcpDefinition
    mpc: MpcConfig
    seed: int

    @property
    def x0(self):
        return np.asarray(self.config["initial.state"], dtype=float)


def build_setup(cfg: ExperimentConfig, seed_override=None):
    """Instantiate the experiment described by a config."""
    seed = int(cfg["seed"] if seed_override is None else seed_override)

    kind = cfg["system.kind"]
    if kind == "pendulum":
        system = pendulum_spec(theta_box=cfg["system.theta_box"])
    else:
        system = bicycle_spec()
    if cfg.obstacles:
        system.extra_constraints.extend(obstacle_constraints(cfg.obstacles))

    if len(cfg["initial.state"]) != system.n_x:
        raise ConfigError(
            f"initial.state needs {system.n_x} entries, got {len(cfg['initial.state'])}"
        )

    noise_var = cfg["gp.noise_var"]
    noise_std = cfg["grid.noise_std"]
    if noise_std is None:
        noise_std = float(np.sqrt(noise_var))
    lows, highs = system.feature_box()
    if cfg["grid.lows"] is not None:
        lows = np.asarray(cfg["grid.lows"], dtype=float)
    if cfg["grid.highs"] is not None:
        highs = np.asarray(cfg["grid.highs"], dtype=float)
    counts = cfg["grid.counts"]
    if len(counts) != system.n_z:
        raise ConfigError(f"grid.counts needs {system.n_z} entries")
    grid = TrainingGridSpec(counts=counts, lows=lows, highs=highs, noise_std=noise_std)
    dataset = generate_training_data(
        system, grid, seed, include_gradients=cfg["grid.include_gradients"]
    )

    params = []
    for k in range(system.n_g):
        fixed = cfg.hyper.get(k)
        if fixed and "lengthscales" in fixed and "output_scale" in fixed:
            params.append(
                KernelParams(
                    lengthscales=np.asarray(fixed["lengthscales"], dtype=float),
                    output_scale=float(fixed["output_scale"]),
                    noise_var=noise_var,
                )
            )
        elif cfg["gp.fit"]:
            params.append(fit_hyperparameters(dataset, output_dim=k, noise_var=noise_var))
        else:
            raise ConfigError(
                f"gp.fit is false but gp.dim{k}.lengthscales/output_scale missing"
            )
    models = [ScalarGpModel(dataset, p, output_dim=k) for k, p in enumerate(params)]

    if len(cfg["cost.q"]) != system.n_x or len(cfg["cost.r"]) != system.n_u:
        raise ConfigError("cost.q / cost.r lengths must match the state/input sizes")
    cost = QuadraticStageCost(
        cfg["cost.q"], cfg["cost.r"],
        x_ref=cfg["cost.x_ref"], u_ref=cfg["cost.u_ref"],
    )

    sampler_options = SamplerOptions(
        truncation_enabled=cfg["sampler.truncation"],
        max_rejections=cfg["sampler.max_rejections"],
        snap_tol=cfg["sampler.snap_tol"],
        freeze_var_factor=cfg["sampler.freeze_var_factor"],
    )
    u_init = cfg["initial.input"]
    ocp = OcpDefinition(
        system=system,
        models=models,
        horizon=cfg["ocp.horizon"],
        n_samples=cfg["ocp.samples"],
        cost=cost,
        conf=ConfidenceParams(
            sqrt_beta=cfg["gp.sqrt_beta"], failure_prob=cfg["gp.failure_prob"]
        ),
        sampler_options=sampler_options,
        soft_constraints=cfg["qp.soft"],
        slack_weight=cfg["qp.slack_weight"],
        qp_tol=cfg["qp.tol"],
        qp_max_iter=cfg["qp.max_iter"],
        u_init=np.asarray(u_init, dtype=float) if u_init is not None else None,
    )
    mpc = MpcConfig(iters=cfg["mpc.iters"], keep=cfg["mpc.keep"], steps=cfg["mpc.steps"])
    return ExperimentSetup(
        config=cfg, system=system, dataset=dataset, params=params, models=models,
        ocp=ocp, mpc=mpc, seed=seed,
    )
