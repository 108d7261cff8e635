"""Declarative run configuration (YAML) for the command-line pipeline.

Precedence, lowest to highest: built-in defaults, the config file, command
line flags.  Unknown keys are rejected and ``seed`` must be given somewhere.
"""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import yaml

from .hstnet.config import PRESETS, ConfigError, NetworkConfig
from .perturbation import PerturbationError, PerturbSpec
from .postopt import PostOptConfig, PostOptError
from .representation import RepresentationKind
from .sequence_io import OBJECT_KINDS

DEFAULTS = {
    "seed": None,
    "preset": "miniature",
    "hand_model": None,
    "out": "run",
    "generate": {"count": 3, "n_frames": 30, "object_kinds": list(OBJECT_KINDS), "fps": 30},
    "filter": {"max_distance": 0.15, "stride": None},
    "perturb": {"mode": "B", "sigma_translation": None, "sigma_pose": None, "lowpass": 0},
    "network": {},
    "train": {"lr": 3e-4, "weight_decay": 1e-6, "batch": 8, "steps": 2000},
    "postopt": {"enabled": True, "lambda_smooth": 0.1, "theta_weight": 1e-4, "max_iters": 500, "tol": 1e-10},
    "metrics": {"contact_threshold": 0.002, "voxel_size": 0.002, "ciou_pooling": "pooled",
                "contact_mode": "signed"},
}

_MODEL_FOR_PRESET = {"miniature": "default:64:16:7", "full": "default:778:16:7"}
_NETWORK_KEYS = set(NetworkConfig.__dataclass_fields__)


def _merge(base: dict, override: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and key != "network":
            if not isinstance(value, dict):
                raise ConfigError(f"{where} must be a mapping")
            out[key] = _merge(base[key], value, where + ".")
        elif key == "network":
            if not isinstance(value, dict):
                raise ConfigError("network must be a mapping")
            extra = sorted(set(value) - _NETWORK_KEYS)
            if extra:
                raise ConfigError(f"unknown config key 'network.{extra[0]}'")
            out[key] = {**base[key], **value}
        else:
            out[key] = value
    return out


class RunConfig:
    def __init__(self, data: dict):
        self.data = data
        self.validate()

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "RunConfig":
        data = copy.deepcopy(DEFAULTS)
        if path is not None:
            p = Path(path)
            if not p.exists():
                raise ConfigError(f"config file {p} not found")
            try:
                loaded = yaml.safe_load(p.read_text()) or {}
            except yaml.YAMLError as exc:
                raise ConfigError(f"config file {p} is not valid YAML: {exc}") from None
            if not isinstance(loaded, dict):
                raise ConfigError("config file must contain a mapping at the top level")
            data = _merge(data, loaded)
        if overrides:
            data = _merge(data, overrides)
        return cls(data)

    def __getitem__(self, key):
        return self.data[key]

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    def validate(self):
        d = self.data
        if d["seed"] is None:
            raise ConfigError("seed is mandatory (set 'seed' in the config or pass --seed)")
        if not isinstance(d["seed"], int) or isinstance(d["seed"], bool) or d["seed"] < 0:
            raise ConfigError("seed must be a non-negative integer")
        if d["preset"] not in PRESETS:
            raise ConfigError(f"preset must be one of {sorted(PRESETS)}, got {d['preset']!r}")
        g = d["generate"]
        if not isinstance(g["count"], int) or g["count"] < 0:
            raise ConfigError("generate.count must be a non-negative integer")
        if not isinstance(g["n_frames"], int) or g["n_frames"] < 30:
            raise ConfigError("generate.n_frames must be an integer >= 30")
        kinds = g["object_kinds"]
        if not isinstance(kinds, list) or not kinds:
            raise ConfigError("generate.object_kinds must be a non-empty list")
        for k in kinds:
            if k not in OBJECT_KINDS:
                raise ConfigError(f"generate.object_kinds: unknown object kind {k!r} "
                                  f"(expected one of {', '.join(OBJECT_KINDS)})")
        if not d["filter"]["max_distance"] or d["filter"]["max_distance"] <= 0:
            raise ConfigError("filter.max_distance must be positive")
        try:
            self.perturb_spec()
        except (PerturbationError, TypeError) as exc:
            raise ConfigError(f"perturb: {exc}") from None
        self.network_config()
        t = d["train"]
        for key in ("batch", "steps"):
            if not isinstance(t[key], int) or t[key] <= 0:
                raise ConfigError(f"train.{key} must be a positive integer")
        for key in ("lr", "weight_decay"):
            if not isinstance(t[key], (int, float)) or t[key] < 0:
                raise ConfigError(f"train.{key} must be a non-negative number")
        try:
            self.postopt_config()
        except (PostOptError, TypeError) as exc:
            raise ConfigError(f"postopt: {exc}") from None
        m = d["metrics"]
        if m["ciou_pooling"] not in ("pooled", "per_frame"):
            raise ConfigError("metrics.ciou_pooling must be 'pooled' or 'per_frame'")
        if m["contact_mode"] not in ("signed", "band"):
            raise ConfigError("metrics.contact_mode must be 'signed' or 'band'")
        if m["contact_threshold"] <= 0 or m["voxel_size"] <= 0:
            raise ConfigError("metrics thresholds must be positive")

    # typed views -----------------------------------------------------------
    def perturb_spec(self, seed_offset: int = 0) -> PerturbSpec:
        p = self.data["perturb"]
        return PerturbSpec(mode=p["mode"], sigma_translation=p["sigma_translation"], sigma_pose=p["sigma_pose"],
                           seed=self.seed + seed_offset, lowpass=p["lowpass"])

    def network_config(self) -> NetworkConfig:
        net = dict(self.data["network"])
        rep = net.get("representation")
        if rep is not None:
            try:
                RepresentationKind(rep)
            except ValueError:
                raise ConfigError(f"network.representation: unknown kind {rep!r}") from None
        try:
            return PRESETS[self.data["preset"]](**net)
        except TypeError as exc:
            raise ConfigError(f"network: {exc}") from None

    def postopt_config(self) -> PostOptConfig:
        p = {k: v for k, v in self.data["postopt"].items() if k != "enabled"}
        return PostOptConfig(**p)

    @property
    def hand_model_ref(self) -> str:
        return self.data["hand_model"] or _MODEL_FOR_PRESET[self.data["preset"]]

    def canonical(self) -> str:
        # the output location does not change any artifact, so it stays out of the hash
        view = {k: v for k, v in self.data.items() if k != "out"}
        return json.dumps(view, sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def dump(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=True)
