"""Experiment configuration: YAML parsing, defaults, presets, hashing.

A config is one human-editable YAML file with sections mirroring the
simulation setup. ``topology`` may be an inline block or the name of a
shipped topology preset (or a path to one). Shipped experiment presets live
next to this module: ``paperV.preset`` (the headline 4-agent scenario) and
``tiny.preset`` (a CI-fast 2-agent variant).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .aggregation import AggregationMode, AggregationSettings, BoundParams
from .control import ControlGains
from .dynamics import ELParams, LeaderTrajectory
from .gp import KernelParams
from .topology import TopologyEnsemble, ensemble_from_dict, make_switcher


class ConfigError(ValueError):
    """Malformed configuration; the message names the offending field."""


_DEFAULTS = {
    "name": "unnamed",
    "n_agents": 4,
    "horizon": 100.0,
    "dt": 1e-3,
    "integrator": "RK4",
    "mode": "CoraAvg",
    "log_every": 1,
    "eta_every": 10,
    "settle_fraction": 0.5,
    "seed": 0,
    "gains": {"alpha": 2.0, "c": 2.0, "sigma_g": 0.15},
    "kernel": {"signal_std": 1.0, "inv_lengthscales": [1.0, 1.0], "noise_std": 0.1},
    "aggregation": {"epsilon": 1e-12},
    "bound": {"delta": 0.05, "tau": 0.01, "domain_diameter": None},
    "el_params": {"m1": 1.0, "m2": 1.0, "l1": 1.0, "l2": 1.0, "gravity": 9.81},
    "leader": {"amplitude": 0.8, "angular_rate": 0.02 * np.pi},
    "training": {
        "sample_counts": [350, 250, 300, 250],
        "box": [[-1.0, 1.0], [-1.0, 1.0]],
        "region_bias": 0.8,
        "noise_std": 0.1,
        "seed": 2024,
    },
    "initial": {"q_range": [0.0, 1.6], "qdot_range": [-0.8, 0.8]},
    "montecarlo": {"trials": 20},
    "workspace_grid": 50,
    "topology": "paperV",
}

_SECTION_KEYS = set(_DEFAULTS)


def _merge(defaults, user):
    if isinstance(defaults, dict) and isinstance(user, dict):
        out = dict(defaults)
        for k, v in user.items():
            out[k] = _merge(defaults.get(k), v) if k in defaults else v
        return out
    return defaults if user is None else user


def preset_path(name: str) -> Path:
    """Resolve a shipped preset name (or an existing path) to a file path."""
    p = Path(name)
    if p.exists():
        return p
    base = resources.files("coragp") / "presets"
    for candidate in (f"{name}", f"{name}.preset", f"{name}.yaml", f"{name}_topology.yaml"):
        f = base / candidate
        if f.is_file():
            return Path(str(f))
    raise ConfigError(f"unknown preset or missing file: {name!r}")


@dataclass
class SimConfig:
    """Fully-resolved experiment description."""

    raw: dict
    topology_data: dict = field(repr=False, default=None)

    def __post_init__(self):
        r = self.raw
        unknown = set(r) - _SECTION_KEYS
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            self.mode = AggregationMode.parse(r["mode"])
        except ValueError as exc:
            raise ConfigError(f"field 'mode': {exc}") from exc
        if r["dt"] <= 0:
            raise ConfigError(f"field 'dt' must be positive, got {r['dt']}")
        if r["horizon"] <= 0:
            raise ConfigError(f"field 'horizon' must be positive, got {r['horizon']}")
        if r["integrator"] not in ("RK4", "Euler"):
            raise ConfigError(f"field 'integrator' must be RK4 or Euler, got {r['integrator']!r}")
        n = int(r["n_agents"])
        counts = r["training"]["sample_counts"]
        if len(counts) != n:
            raise ConfigError(
                f"field 'training.sample_counts' has {len(counts)} entries for {n} agents"
            )
        if any(c < 1 for c in counts):
            raise ConfigError("field 'training.sample_counts' entries must be >= 1")
        box = np.asarray(r["training"]["box"], dtype=np.float64)
        if box.shape[1] != 2 or np.any(box[:, 0] >= box[:, 1]):
            raise ConfigError("field 'training.box' must be a list of nonempty [lo, hi] ranges")

        c = r["gains"]["c"]
        c = np.full(n, float(c)) if np.ndim(c) == 0 else np.asarray(c, dtype=np.float64)
        if c.shape != (n,):
            raise ConfigError(f"field 'gains.c' must be scalar or length {n}")
        try:
            self.gains = ControlGains(alpha=float(r["gains"]["alpha"]), c=c,
                                      sigma_g=float(r["gains"]["sigma_g"]))
            self.kernel = KernelParams(
                signal_std=float(r["kernel"]["signal_std"]),
                inv_lengthscales=np.asarray(r["kernel"]["inv_lengthscales"], dtype=np.float64),
                noise_std=float(r["kernel"]["noise_std"]),
            )
            el = r["el_params"]
            self.el_params = ELParams(m1=el["m1"], m2=el["m2"], l1=el["l1"], l2=el["l2"],
                                      gravity=el["gravity"])
            self.aggregation = AggregationSettings(
                mode=self.mode, sigma_g=float(r["gains"]["sigma_g"]),
                epsilon=float(r["aggregation"]["epsilon"]),
            )
            diameter = r["bound"]["domain_diameter"]
            if diameter is None:
                diameter = float(np.linalg.norm(box[:, 1] - box[:, 0]))
            self.bound = BoundParams(
                delta=float(r["bound"]["delta"]), tau=float(r["bound"]["tau"]),
                domain_diameter=diameter, state_dim=box.shape[0], num_agents=n,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        self.leader = LeaderTrajectory(
            amplitude=float(r["leader"]["amplitude"]),
            angular_rate=float(r["leader"]["angular_rate"]),
        )
        self.n_agents = n
        self.horizon = float(r["horizon"])
        self.dt = float(r["dt"])
        self.integrator = r["integrator"]
        self.seed = int(r["seed"])
        self.settle_fraction = float(r["settle_fraction"])
        self.log_every = int(r["log_every"])
        self.eta_every = int(r["eta_every"])
        self.training = r["training"]
        self.training_box = box
        self.initial = r["initial"]
        self.mc_trials = int(r["montecarlo"]["trials"])
        self.workspace_grid = int(r["workspace_grid"])

        if self.topology_data is None:
            topo = r["topology"]
            if isinstance(topo, str):
                with open(preset_path(topo if topo.endswith((".yaml", ".preset"))
                                      else f"{topo}_topology")) as fh:
                    self.topology_data = yaml.safe_load(fh)
            else:
                self.topology_data = topo
        ensemble, switcher_cfg = ensemble_from_dict(self.topology_data)
        if ensemble.n != n:
            raise ConfigError(
                f"topology has {ensemble.n} agents but config declares {n}"
            )
        self.ensemble: TopologyEnsemble = ensemble
        self.switcher_cfg = switcher_cfg

    def make_switcher(self, seed: int):
        return make_switcher(self.switcher_cfg, len(self.ensemble), seed=seed)

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        return json.loads(json.dumps(self.raw, default=_jsonable))

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, default=_jsonable)
        return hashlib.sha256(canonical.encode()).hexdigest()

    def serialize(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def with_overrides(self, overrides: dict) -> "SimConfig":
        raw = json.loads(json.dumps(self.raw, default=_jsonable))
        for key, value in overrides.items():
            node = raw
            parts = key.split(".")
            for part in parts[:-1]:
                if part not in node or not isinstance(node[part], dict):
                    raise ConfigError(f"override targets unknown field {key!r}")
                node = node[part]
            if parts[-1] not in node:
                raise ConfigError(f"override targets unknown field {key!r}")
            node[parts[-1]] = value
        return SimConfig(raw=raw)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def parse_value(text: str):
    """Parse a CLI override value with YAML scalar rules."""
    return yaml.safe_load(text)


def load_config(path_or_name: str, overrides: dict | None = None) -> SimConfig:
    """Load a config file or shipped preset, apply defaults and overrides."""
    path = preset_path(path_or_name)
    try:
        with open(path) as fh:
            user = yaml.safe_load(fh) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigError(f"config root of {path} must be a mapping")
    raw = _merge(_DEFAULTS, user)
    cfg = SimConfig(raw=raw)
    if overrides:
        cfg = cfg.with_overrides(overrides)
    return cfg
