"""Synthetic streams with planted, positionally correlated occurrences.

The stream is cut into blocks of ``block`` events. A block either carries
one planted occurrence (its types placed at fixed offsets inside the block)
or only noise. Every event gets a ``price`` from a per-type random walk and
the matching ``pct_change``.
"""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from pathlib import Path

from ..events import Event, write_stream


class GenerationError(ValueError):
    pass


@dataclass(frozen=True)
class Plant:
    """``count`` occurrences of ``types[i]`` at block offset ``offsets[i]``."""

    pattern_id: int
    types: tuple[int, ...]
    offsets: tuple[int, ...]
    count: int

    @classmethod
    def from_json(cls, obj: dict) -> "Plant":
        return cls(int(obj.get("pattern", 0)), tuple(obj["types"]), tuple(obj["offsets"]),
                   int(obj["count"]))


@dataclass(frozen=True)
class StreamProfile:
    type_count: int
    length: int
    block: int = 20
    plants: tuple[Plant, ...] = ()
    noise_types: tuple[int, ...] | None = None  # default: every type
    noise_weights: tuple[float, ...] | None = None
    seed: int = 0
    interval_us: int = 1000
    volatility: float = 0.01

    @classmethod
    def from_json(cls, obj: dict) -> "StreamProfile":
        known = {"type_count", "length", "block", "plants", "noise_types", "noise_weights", "seed",
                 "interval_us", "volatility"}
        unknown = set(obj) - known
        if unknown:
            raise GenerationError(f"unknown profile keys: {sorted(unknown)}")
        return cls(int(obj["type_count"]), int(obj["length"]), int(obj.get("block", 20)),
                   tuple(Plant.from_json(p) for p in obj.get("plants", ())),
                   tuple(obj["noise_types"]) if obj.get("noise_types") is not None else None,
                   tuple(obj["noise_weights"]) if obj.get("noise_weights") is not None else None,
                   int(obj.get("seed", 0)), int(obj.get("interval_us", 1000)),
                   float(obj.get("volatility", 0.01)))

    @classmethod
    def load(cls, path: str | Path) -> "StreamProfile":
        return cls.from_json(json.loads(Path(path).read_text()))

    def validate(self) -> None:
        if self.type_count < 1 or self.length < 0 or self.block < 1:
            raise GenerationError("need type_count >= 1, length >= 0 and block >= 1")
        blocks = self.length // self.block
        wanted = sum(p.count for p in self.plants)
        if wanted > blocks:
            raise GenerationError(
                f"cannot plant {wanted} occurrences into {blocks} blocks of {self.block} events")
        for p in self.plants:
            if len(p.types) != len(p.offsets) or not p.types:
                raise GenerationError(f"plant for pattern {p.pattern_id}: types and offsets differ in length")
            if len(set(p.offsets)) != len(p.offsets) or list(p.offsets) != sorted(p.offsets):
                raise GenerationError(f"plant for pattern {p.pattern_id}: offsets must be strictly increasing")
            if p.offsets[0] < 0 or p.offsets[-1] >= self.block:
                raise GenerationError(f"plant for pattern {p.pattern_id}: offsets must lie in [0, {self.block})")
            if any(not 0 <= t < self.type_count for t in p.types):
                raise GenerationError(f"plant for pattern {p.pattern_id}: type out of range")
        noise = self.noise_types if self.noise_types is not None else tuple(range(self.type_count))
        if not noise or any(not 0 <= t < self.type_count for t in noise):
            raise GenerationError("noise types must be a non-empty subset of the stream types")
        if self.noise_weights is not None and len(self.noise_weights) != len(noise):
            raise GenerationError("noise_weights must match noise_types")


def generate_stream(profile: StreamProfile) -> tuple[list[Event], list[dict]]:
    """Return the events and the planted occurrences (by seq)."""
    profile.validate()
    rng = random.Random(profile.seed)
    blocks = profile.length // profile.block
    jobs = [p for p in profile.plants for _ in range(p.count)]
    chosen = sorted(rng.sample(range(blocks), len(jobs)))
    rng.shuffle(jobs)
    slots: dict[int, tuple[int, Plant]] = {}
    planted = []
    for b, plant in zip(chosen, jobs):
        seqs = []
        for t, off in zip(plant.types, plant.offsets):
            i = b * profile.block + off
            slots[i] = (t, plant)
            seqs.append(i)
        planted.append({"pattern": plant.pattern_id, "block": b, "seqs": seqs})
    planted.sort(key=lambda r: r["seqs"][0])

    noise = profile.noise_types if profile.noise_types is not None else tuple(range(profile.type_count))
    weights = profile.noise_weights
    price = [100.0] * profile.type_count
    events = []
    for i in range(profile.length):
        if i in slots:
            t = slots[i][0]
        else:
            t = rng.choices(noise, weights)[0] if weights else noise[rng.randrange(len(noise))]
        prev = price[t]
        price[t] = prev * math.exp(rng.gauss(0.0, profile.volatility))
        attrs = {"price": round(price[t], 6), "pct_change": round(100.0 * (price[t] - prev) / prev, 6)}
        events.append(Event(i, i * profile.interval_us, t, attrs))
    return events, planted


def sidecar_path(stream_path: str | Path) -> Path:
    p = Path(stream_path)
    return p.with_name(p.name + ".planted.json")


def write_generated(profile: StreamProfile, path: str | Path) -> tuple[int, int]:
    """Write the stream and its planted-occurrence sidecar; return both counts."""
    events, planted = generate_stream(profile)
    n = write_stream(path, events)
    sidecar_path(path).write_text(json.dumps({"seed": profile.seed, "planted": planted}) + "\n")
    return n, len(planted)
