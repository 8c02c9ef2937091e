"""Training: run the operator over a prefix and export everything shedders read."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .events import Event, WindowKind, WindowSpec
from .operator import CEPOperator
from .patterns import PatternSet
from .planner import (ThresholdArray, VirtualWindow, build_threshold_array, build_virtual_window)
from .stats import DEFAULT_MIN_OBSERVATIONS, StatsCollector, TrainingStats, UtilityTable, build_utility_table


def _counter_out(c: Counter) -> list:
    return [[*k, v] if isinstance(k, tuple) else [k, v] for k, v in sorted(c.items())]


def _counter_in(rows: list) -> Counter:
    return Counter({tuple(r[:-1]): r[-1] for r in rows})


def stats_to_json(st: TrainingStats) -> dict:
    return {"processed": _counter_out(st.processed), "useful": _counter_out(st.useful),
            "pm_pairings": _counter_out(st.pm_pairings), "pm_completed": _counter_out(st.pm_completed),
            "window_tallies": [_counter_out(c) for c in st.window_tallies],
            "event_tallies": [_counter_out(c) for c in st.event_tallies],
            "contributions": st.contributions}


def stats_from_json(obj: dict) -> TrainingStats:
    return TrainingStats(_counter_in(obj["processed"]), _counter_in(obj["useful"]),
                         _counter_in(obj["pm_pairings"]), _counter_in(obj["pm_completed"]),
                         [_counter_in(c) for c in obj["window_tallies"]],
                         [_counter_in(c) for c in obj["event_tallies"]], int(obj["contributions"]))


@dataclass
class ShedModel:
    table: UtilityTable
    vw: VirtualWindow
    array: ThresholdArray
    stats: TrainingStats

    @property
    def window_size(self) -> int:
        return self.table.window_size

    def to_json(self) -> dict:
        return {"table": self.table.to_json(),
                "virtual_window": [[*k, v] for k, v in self.vw.occurrences.items()],
                "threshold_array": list(self.array.values),
                "stats": stats_to_json(self.stats)}

    @classmethod
    def from_json(cls, obj: dict) -> "ShedModel":
        table = UtilityTable.from_json(obj["table"])
        vw = VirtualWindow({(int(t), int(p), int(s)): float(o) for t, p, s, o in obj["virtual_window"]},
                           table.window_size)
        return cls(table, vw, ThresholdArray(tuple(obj["threshold_array"])), stats_from_json(obj["stats"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ShedModel":
        return cls.from_json(json.loads(Path(path).read_text()))


def position_limit(window: WindowSpec, positions: int | None = None) -> int:
    """Position range of the utility table; time windows need it spelled out."""
    if positions is not None:
        return positions
    if window.kind is WindowKind.COUNT:
        return int(window.size)
    raise ValueError("time-based windows need an explicit position limit")


def build_model(stats: TrainingStats, patterns: PatternSet, type_count: int, window_size: int,
                bin_size: int = 1, min_observations: int = DEFAULT_MIN_OBSERVATIONS) -> ShedModel:
    table = build_utility_table(stats, patterns, type_count, window_size, bin_size, min_observations)
    vw = build_virtual_window(stats.window_tallies, window_size)
    return ShedModel(table, vw, build_threshold_array(vw, table), stats)


def train(events: Iterable[Event], patterns: PatternSet, window: WindowSpec, type_count: int,
          bin_size: int = 1, min_observations: int = DEFAULT_MIN_OBSERVATIONS,
          positions: int | None = None) -> ShedModel:
    """Process ``events`` without shedding and build the model from what was seen."""
    collector = StatsCollector()
    op = CEPOperator(patterns, window, collector=collector)
    op.run(events)
    return build_model(collector.snapshot(), patterns, type_count, position_limit(window, positions),
                       bin_size, min_observations)
