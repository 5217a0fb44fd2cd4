"""Run configuration: dataclasses plus a strict JSON loader.

Schema (every key optional, unknown keys are errors):

    {
      "method": "gorp" | "seq_adam" | "seq_lora_adam",
      "seed": 0, "epochs": 1, "batch_size": 8, "out_dir": null,
      "model": {"layers": [{"name", "out_dim", "kind", "activation", "lora_rank"}, ...]},
      "optimizer": {<GorpConfig fields>, "subspace": {<SubspaceConfig fields>}},
      "data": {<DataConfig fields>}
    }

The last model layer's out_dim defaults to the number of classes and the
first layer's input dim is the data dimension.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from gorp.errors import SpecError
from gorp.net import FULL, LORA, LayerSpec, ModelSpec
from gorp.optimizer import GorpConfig
from gorp.subspace import SubspaceConfig

METHODS = ("gorp", "seq_adam", "seq_lora_adam")


@dataclass
class LayerConfig:
    name: str
    out_dim: int | None = None
    kind: str = FULL
    activation: str = "relu"
    lora_rank: int = 8


def default_layers() -> list[LayerConfig]:
    return [
        LayerConfig("fc1", 64, FULL, "relu"),
        LayerConfig("fc2", 64, LORA, "relu", 8),
        LayerConfig("head", None, FULL, "none"),
    ]


@dataclass
class ModelConfig:
    layers: list[LayerConfig] = field(default_factory=default_layers)

    def build(self, input_dim: int, num_classes: int, seed: int) -> ModelSpec:
        specs = []
        prev = input_dim
        for i, lc in enumerate(self.layers):
            out = lc.out_dim
            if out is None:
                if i != len(self.layers) - 1:
                    raise SpecError(f"layer {lc.name!r}: only the last layer may omit out_dim")
                out = num_classes
            specs.append(LayerSpec(lc.name, prev, out, lc.kind, lc.activation, lc.lora_rank))
            prev = out
        spec = ModelSpec(input_dim, num_classes, specs, seed)
        spec.validate()
        return spec


@dataclass
class DataConfig:
    kind: str = "rotated"  # rotated | permuted | files
    num_tasks: int = 3
    samples_per_task: int = 1000
    test_samples: int = 500
    dim: int = 32
    classes: int = 4
    angle_step: float = 30.0
    noise_sigma: float = 0.4
    radius: float = 1.0
    seed: int | None = None  # None: follow the run seed
    holdout: bool = False
    base_path: str | None = None  # permuted: base task file (generated when absent)
    paths: list[str] = field(default_factory=list)  # files: one dataset per task

    def resolved(self, run_seed: int) -> "DataConfig":
        return dataclasses.replace(self, seed=run_seed if self.seed is None else self.seed)


@dataclass
class RunConfig:
    method: str = "gorp"
    seed: int = 0
    epochs: int = 1
    batch_size: int = 8
    out_dir: str | None = None
    model: ModelConfig = field(default_factory=ModelConfig)
    optimizer: GorpConfig = field(default_factory=GorpConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def validate(self) -> None:
        if self.method not in METHODS:
            raise SpecError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise SpecError("epochs and batch_size must be >= 1")
        if self.method == "seq_lora_adam" and not any(lc.kind == LORA for lc in self.model.layers):
            raise SpecError("seq_lora_adam needs at least one LoRA layer")
        if self.data.kind not in ("rotated", "permuted", "files"):
            raise SpecError(f"unknown data kind {self.data.kind!r}")
        if self.data.kind == "files" and not self.data.paths:
            raise SpecError("data kind 'files' needs a nonempty 'paths' list")


def _build(cls, raw, where: str):
    if not isinstance(raw, dict):
        raise SpecError(f"{where}: expected an object, got {type(raw).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise SpecError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = dict(raw)
    try:
        if cls is GorpConfig and "subspace" in kwargs:
            kwargs["subspace"] = _build(SubspaceConfig, kwargs["subspace"], f"{where}.subspace")
        if cls is ModelConfig and "layers" in kwargs:
            kwargs["layers"] = [_build(LayerConfig, lc, f"{where}.layers[{i}]") for i, lc in enumerate(kwargs["layers"])]
        return cls(**kwargs)
    except TypeError as exc:
        raise SpecError(f"{where}: {exc}") from None


def config_from_dict(raw: dict) -> RunConfig:
    raw = dict(raw)
    sub = {}
    for key, cls in (("model", ModelConfig), ("optimizer", GorpConfig), ("data", DataConfig)):
        if key in raw:
            sub[key] = _build(cls, raw.pop(key), key)
    cfg = _build(RunConfig, raw, "config")
    for key, value in sub.items():
        setattr(cfg, key, value)
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    try:
        return config_from_dict(raw)
    except SpecError as exc:
        raise SpecError(f"{path}: {exc}") from None


def config_to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)
