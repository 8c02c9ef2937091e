"""Experiment configuration (one JSON document)."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from ..events import WindowSpec
from ..shedders import SHEDDER_KINDS


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CostModel:
    """Virtual-clock service time, in seconds, per unit of operator work."""

    event: float = 40e-6       # per event dequeued
    window: float = 20e-6      # per (event, window) pairing
    step: float = 80e-6        # per state-machine evaluation
    decision: float = 4e-6     # per shedding decision

    def cost(self, events: int, windows: int, steps: int, decisions: int) -> float:
        return self.event * events + self.window * windows + self.step * steps + self.decision * decisions


@dataclass(frozen=True)
class ExperimentConfig:
    stream: str
    patterns: str
    window: WindowSpec
    type_count: int
    shedder: dict = field(default_factory=lambda: {"shedder": "hspice"})
    rate_pct: float = 100.0
    latency_bound: float = 1.0
    safety_fraction: float = 0.8
    clock: str = "virtual"
    seed: int = 0
    train_fraction: float = 0.3
    bin_size: int = 1
    min_observations: int = 1000
    positions: int | None = None
    tick_interval: float = 0.1
    half_life: float = 1.0
    queue_capacity: int | None = None
    pm_cap: int = 1024
    protect_negations: bool = False
    mu: float | None = None
    costs: CostModel = CostModel()

    @property
    def shedder_kind(self) -> str:
        return self.shedder.get("shedder", "none")

    def with_(self, **changes) -> "ExperimentConfig":
        cfg = replace(self, **changes)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.shedder_kind not in SHEDDER_KINDS:
            raise ConfigError(f"unknown shedder {self.shedder_kind!r}")
        if self.clock not in ("virtual", "real"):
            raise ConfigError(f"clock must be 'virtual' or 'real', got {self.clock!r}")
        if not self.rate_pct > 0:
            raise ConfigError("rate_pct must be positive")
        if not self.latency_bound > 0 or not 0 < self.safety_fraction <= 1:
            raise ConfigError("need latency_bound > 0 and 0 < safety_fraction <= 1")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if self.type_count < 1 or self.bin_size < 1 or self.pm_cap < 1:
            raise ConfigError("type_count, bin_size and pm_cap must be positive")
        if not self.tick_interval > 0 or not self.half_life > 0:
            raise ConfigError("tick_interval and half_life must be positive")
        if self.mu is not None and not self.mu > 0:
            raise ConfigError("mu must be positive")

    def to_json(self) -> dict:
        obj = asdict(self)
        obj["window"] = self.window.to_json()
        return obj

    @classmethod
    def from_json(cls, obj: dict, base_dir: str | Path | None = None) -> "ExperimentConfig":
        if not isinstance(obj, dict):
            raise ConfigError("experiment config must be a JSON object")
        names = set(cls.__dataclass_fields__)
        unknown = set(obj) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = {"stream", "patterns", "window", "type_count"} - set(obj)
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        kw = dict(obj)
        base = Path(base_dir) if base_dir is not None else None
        for key in ("stream", "patterns"):
            p = Path(kw[key])
            kw[key] = str(base / p) if base is not None and not p.is_absolute() else str(p)
        try:
            kw["window"] = WindowSpec.from_json(kw["window"])
            kw["costs"] = CostModel(**kw.get("costs", {}))
            kw["type_count"] = int(kw["type_count"])
            cfg = cls(**kw)
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"bad config: {exc}") from exc
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            obj = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_json(obj, path.parent)
