"""Experiment configuration, presets and provenance.

Precedence, lowest to highest: built-in defaults, the named preset, the
JSON config file, command-line flags (``--set a.b=value`` for any field).
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

from . import __version__
from .space import RECURRENT_OP_NAMES, SearchSpaceSpec
from .supernet.model import TrainConfig
from .supernet.task import TaskSpec

OUTPUT_ROOT_ENV = "NASEVAL_OUTPUT_ROOT"
BUNDLED_PREFIX = "bundled:"
BUNDLED_TABLE = BUNDLED_PREFIX + "rnn2_ground_truth.jsonl"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    preset: str | None = None
    spec: dict = field(default_factory=lambda: {"family": "chain-recurrent", "node_count": 2,
                                                "ops": list(RECURRENT_OP_NAMES)})
    task: dict = field(default_factory=lambda: TaskSpec().to_dict())
    train: dict = field(default_factory=lambda: TrainConfig().to_dict())
    samplers: list = field(default_factory=lambda: [{"name": "random"}, {"name": "reinforce"}, {"name": "predictor"}])
    evaluator: dict = field(default_factory=lambda: {"kind": "table-exact", "table": BUNDLED_TABLE, "ws_seed": 0})
    seeds: list = field(default_factory=lambda: list(range(10)))
    budget: int = 10
    prefix: list = field(default_factory=lambda: [[0, "tanh"], [1, "relu"]])
    gt_seeds: list = field(default_factory=lambda: [0, 1, 2])
    workers: int = 1
    output_dir: str = "."

    def validate(self) -> "ExperimentConfig":
        if not self.seeds or any(not isinstance(s, int) or isinstance(s, bool) or s < 0 for s in self.seeds):
            raise ConfigError(f"seeds must be a non-empty list of non-negative integers, got {self.seeds!r}")
        if not self.gt_seeds or any(not isinstance(s, int) or isinstance(s, bool) or s < 0 for s in self.gt_seeds):
            raise ConfigError(f"gt_seeds must be a non-empty list of non-negative integers, got {self.gt_seeds!r}")
        if not isinstance(self.budget, int) or self.budget < 1:
            raise ConfigError(f"budget must be a positive integer, got {self.budget!r}")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ConfigError("workers must be a positive integer")
        try:
            self.search_space()
            self.task_spec()
            self.train_config()
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from None
        for s in self.samplers:
            if not isinstance(s, dict) or "name" not in s:
                raise ConfigError(f"sampler entries need a 'name', got {s!r}")
        return self

    def search_space(self) -> SearchSpaceSpec:
        return SearchSpaceSpec.from_dict(self.spec)

    def task_spec(self) -> TaskSpec:
        return TaskSpec.from_dict(self.task)

    def train_config(self) -> TrainConfig:
        return TrainConfig.from_dict(self.train)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        base = cls().to_dict()
        return cls(**_merge(base, d))

    def config_hash(self) -> str:
        """SHA-256 (first 16 hex digits) of the canonical JSON, excluding ``output_dir``."""
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


PRESETS: dict[str, dict] = {
    "rnn2-ground-truth": {"seeds": [0, 1, 2]},
    "rnn2-search": {"seeds": list(range(10)), "budget": 10,
                    "samplers": [{"name": "random"},
                                 {"name": "reinforce", "config": {"learning_rate": 0.05, "baseline_decay": 0.9}},
                                 {"name": "predictor", "config": {"pool_fraction": 0.2, "per_iteration": 1}}]},
    "rnn2-search-noisy": {"seeds": list(range(10)), "budget": 10,
                          "evaluator": {"kind": "table-noisy", "table": BUNDLED_TABLE, "ws_seed": 0}},
    "rnn2-search-shared": {"seeds": list(range(10)), "budget": 10,
                           "evaluator": {"kind": "supernet-shared", "table": BUNDLED_TABLE, "ws_seed": 0}},
    "rnn2-ws-rank": {"seeds": list(range(10))},
    "rnn3-sharing-amount": {"spec": {"family": "chain-recurrent", "node_count": 3, "ops": list(RECURRENT_OP_NAMES)},
                            "seeds": list(range(10)), "prefix": [[0, "tanh"], [1, "relu"]]},
}


def preset_config(name: str | None) -> dict:
    if name is None:
        return {}
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    d = copy.deepcopy(PRESETS[name])
    d["preset"] = name
    return d


def parse_assignment(text: str) -> tuple[list[str], object]:
    """``a.b=value``; the value is parsed as JSON when possible, else kept as text."""
    if "=" not in text:
        raise ConfigError(f"--set expects key=value, got {text!r}")
    path, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path.split("."), value


def apply_assignment(d: dict, path: list[str], value) -> None:
    cur = d
    for p in path[:-1]:
        cur = cur.setdefault(p, {})
        if not isinstance(cur, dict):
            raise ConfigError(f"cannot set {'.'.join(path)}: {p} is not an object")
    cur[path[-1]] = value


def build_config(preset: str | None, config_path: str | None, overrides: dict, assignments: list[str]) -> ExperimentConfig:
    d = preset_config(preset)
    if config_path:
        file_d = json.loads(Path(config_path).read_text(encoding="utf-8"))
        if not isinstance(file_d, dict):
            raise ConfigError("config file must hold a JSON object")
        if file_d.get("preset") and not preset:
            d = _merge(preset_config(file_d["preset"]), d)
        d = _merge(d, file_d)
    d = _merge(d, {k: v for k, v in overrides.items() if v is not None})
    for a in assignments:
        apply_assignment(d, *parse_assignment(a))
    return ExperimentConfig.from_dict(d).validate()


def output_dir(cfg: ExperimentConfig, default_sub: str) -> Path:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "naseval-out"))
    sub = cfg.output_dir if cfg.output_dir not in (None, "", ".") else default_sub
    p = root / sub
    p.mkdir(parents=True, exist_ok=True)
    return p


def resolve_table_path(ref: str):
    if ref.startswith(BUNDLED_PREFIX):
        return resources.files("naseval") / "data" / ref[len(BUNDLED_PREFIX):]
    return Path(ref)


def provenance(cfg: ExperimentConfig, started: float, elapsed: float) -> dict:
    import datetime

    from . import kernels

    return {
        "tool": "naseval",
        "version": __version__,
        "config_hash": cfg.config_hash(),
        "seeds": list(cfg.seeds),
        "started_utc": datetime.datetime.fromtimestamp(started, datetime.timezone.utc).isoformat(timespec="seconds"),
        "wall_clock_s": round(elapsed, 3),
        "kernel_backend": kernels.BACKEND,
    }
