"""Pipeline configuration: one JSON-serializable tree covering every stage."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .backends import OracleBehavior
from .cascade import CascadeConfig
from .matching import MatchConfig
from .preprocess import PreprocessConfig


@dataclass
class BackendConfig:
    kind: str = "oracle"  # "oracle" | "remote"
    url: str | None = None
    oracle: OracleBehavior = field(default_factory=OracleBehavior)

    def validate(self) -> "BackendConfig":
        if self.kind not in ("oracle", "remote"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "remote" and not self.url:
            raise ValueError("remote backend requires a url")
        self.oracle.validate()
        return self


@dataclass
class PipelineConfig:
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    cascade: CascadeConfig = field(default_factory=CascadeConfig)
    matching: MatchConfig = field(default_factory=MatchConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)
    workers: int = 1

    def validate(self) -> "PipelineConfig":
        self.preprocess.validate()
        self.cascade.validate()
        self.matching.validate()
        self.backend.validate()
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        return self

    def to_dict(self) -> dict:
        return {"schema": 1, **dataclasses.asdict(self)}


def _coerce(cls, data: dict):
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        val = data[f.name]
        if isinstance(val, list):
            val = tuple(val)
        kwargs[f.name] = val
    return cls(**kwargs)


def config_from_dict(data: dict) -> PipelineConfig:
    version = data.get("schema", 1)
    if version != 1:
        raise ValueError(f"unsupported config schema {version}")
    backend_data = dict(data.get("backend", {}))
    oracle = _coerce(OracleBehavior, backend_data.pop("oracle", {}))
    return PipelineConfig(
        preprocess=_coerce(PreprocessConfig, data.get("preprocess", {})),
        cascade=_coerce(CascadeConfig, data.get("cascade", {})),
        matching=_coerce(MatchConfig, data.get("matching", {})),
        backend=BackendConfig(oracle=oracle, **backend_data),
        workers=data.get("workers", 1),
    ).validate()


def load_config(path) -> PipelineConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


def save_config(cfg: PipelineConfig, path) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
