"""Config documents driving the pretrain -> fine-tune -> evaluate pipeline."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Union

from ..data.synth import SyntheticCitySpec
from ..downstream.tasks import DOWNSTREAM_TASKS, TASK_ENTITY
from ..errors import ConfigError
from ..pretrain.heads import PRETRAIN_TASKS, TASK_STAGE

DEFAULT_SEEDS = [1, 13, 31, 42, 131]

TOP_KEYS = {
    "dataset",
    "synthetic_spec",
    "entity",
    "stages",
    "pretrain_tasks",
    "task_weights",
    "paradigm",
    "downstream",
    "finetune",
    "seeds",
    "hparams",
    "out",
}

ENTITY_ALIASES = {
    "poi": "point",
    "segment": "polyline",
    "parcel": "polygon",
    "point": "point",
    "polyline": "polyline",
    "polygon": "polygon",
}


@dataclass
class Hparams:
    dim: int = 128
    hidden: int = 256
    lr: float = 1e-3
    batch: int = 64
    pretrain_steps: int = 500
    finetune_steps: int = 500
    bins: int = 16
    time_slots: int = 48
    graph_layers: int = 2
    seq_layers: int = 2
    heads: int = 4
    max_len: int = 32
    seq_arch: str = "attention"
    tau: float = 0.07
    k_neg: int = 16
    optimizer: str = "adam"
    mask_ratio: float = 0.15
    mask_mode: str = "random"
    network: Optional[str] = None
    exclude_features: list[str] = field(default_factory=list)


@dataclass
class PipelineConfig:
    entity: str
    downstream: str
    dataset: Optional[str] = None
    synthetic_spec: Optional[SyntheticCitySpec] = None
    stages: list[str] = field(default_factory=lambda: ["token"])
    pretrain_tasks: list[str] = field(default_factory=list)
    task_weights: dict[str, float] = field(default_factory=dict)
    paradigm: str = "joint"
    finetune: str = "end-to-end"
    seeds: list[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    hparams: Hparams = field(default_factory=Hparams)
    out: Optional[str] = None

    def validate(self) -> None:
        if (self.dataset is None) == (self.synthetic_spec is None):
            raise ConfigError("config needs exactly one of dataset / synthetic_spec")
        if self.entity not in ("point", "polyline", "polygon"):
            raise ConfigError(f"unknown entity kind {self.entity!r}")
        expected = [s for s in ("token", "graph", "sequence") if s in self.stages]
        if "token" not in self.stages or self.stages != expected or len(set(self.stages)) != len(self.stages):
            raise ConfigError(f"stages must be a token-first canonical-order list, got {self.stages}")
        for task in self.pretrain_tasks:
            if task not in PRETRAIN_TASKS:
                raise ConfigError(f"unknown pretraining task {task!r}")
            if TASK_STAGE[task] not in self.stages:
                raise ConfigError(f"pretraining task {task!r} needs the {TASK_STAGE[task]!r} stage")
        for task in self.task_weights:
            if task not in self.pretrain_tasks:
                raise ConfigError(f"task weight given for absent task {task!r}")
        if self.downstream not in DOWNSTREAM_TASKS:
            raise ConfigError(f"unknown downstream task {self.downstream!r}")
        if TASK_ENTITY[self.downstream] != self.entity:
            raise ConfigError(
                f"downstream task {self.downstream!r} applies to "
                f"{TASK_ENTITY[self.downstream]!r} entities, config says {self.entity!r}"
            )
        if self.paradigm not in ("joint", "sequential"):
            raise ConfigError(f"unknown paradigm {self.paradigm!r}")
        if self.finetune not in ("downstream-only", "end-to-end"):
            raise ConfigError(f"unknown fine-tuning strategy {self.finetune!r}")
        if not self.seeds:
            raise ConfigError("seed list must be non-empty")

    def to_dict(self) -> dict:
        out = asdict(self)
        if self.synthetic_spec is not None:
            out["synthetic_spec"] = asdict(self.synthetic_spec)
        return out

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.blake2b(blob, digest_size=16).hexdigest()


def config_from_dict(doc: dict) -> PipelineConfig:
    unknown = set(doc.keys()) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config key {sorted(unknown)[0]!r}")
    if "entity" not in doc or "downstream" not in doc:
        raise ConfigError("config needs 'entity' and 'downstream' keys")
    entity = ENTITY_ALIASES.get(str(doc["entity"]).lower())
    if entity is None:
        raise ConfigError(f"unknown entity kind {doc['entity']!r}")

    hp_doc = doc.get("hparams", {})
    known_hp = {f for f in Hparams.__dataclass_fields__}
    unknown_hp = set(hp_doc.keys()) - known_hp
    if unknown_hp:
        raise ConfigError(f"unknown hparams key {sorted(unknown_hp)[0]!r}")
    hparams = Hparams(**hp_doc)

    spec = None
    if doc.get("synthetic_spec") is not None:
        spec_doc = doc["synthetic_spec"]
        known_spec = set(SyntheticCitySpec.__dataclass_fields__)
        unknown_spec = set(spec_doc.keys()) - known_spec
        if unknown_spec:
            raise ConfigError(f"unknown synthetic_spec key {sorted(unknown_spec)[0]!r}")
        spec = SyntheticCitySpec(**spec_doc)

    config = PipelineConfig(
        entity=entity,
        downstream=str(doc["downstream"]).lower(),
        dataset=doc.get("dataset"),
        synthetic_spec=spec,
        stages=list(doc.get("stages", ["token"])),
        pretrain_tasks=[str(t).lower() for t in doc.get("pretrain_tasks", [])],
        task_weights={str(k).lower(): float(v) for k, v in doc.get("task_weights", {}).items()},
        paradigm=doc.get("paradigm", "joint"),
        finetune=doc.get("finetune", "end-to-end"),
        seeds=[int(s) for s in doc.get("seeds", DEFAULT_SEEDS)],
        hparams=hparams,
        out=doc.get("out"),
    )
    config.validate()
    return config


def load_config(path: Union[str, Path]) -> PipelineConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return config_from_dict(doc)


def save_config(config: PipelineConfig, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
