"""Statistics gathering and the (type, position, state) utility table."""
from __future__ import annotations

import copy
import json
import threading
from array import array
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Union

import numpy as np

from .patterns import PatternSet

DEFAULT_MIN_OBSERVATIONS = 10_000
ABANDONED = -1  # state_after of a pairing that abandoned its partial match


class NotReady(RuntimeError):
    """Not enough training data to build a model."""


@dataclass(frozen=True)
class ContributionObservation:
    pm_id: int
    state_before: int
    state_after: int
    event_type: int
    position: int
    window_id: int

    @property
    def contributed(self) -> bool:
        return self.state_after != self.state_before


@dataclass(frozen=True)
class CompletionObservation:
    pm_id: int
    window_id: int
    completed: bool


Observation = Union[ContributionObservation, CompletionObservation]


@dataclass
class TrainingStats:
    """Resolved counters; everything a model build needs."""

    processed: Counter = field(default_factory=Counter)          # (t, p, s) -> pairings
    useful: Counter = field(default_factory=Counter)             # (t, p, s) -> contributions of completed PMs
    pm_pairings: Counter = field(default_factory=Counter)        # (p, s) -> pairings
    pm_completed: Counter = field(default_factory=Counter)       # (p, s) -> pairings whose PM completed
    window_tallies: list = field(default_factory=list)           # W_stat: per window Counter((t, p, s))
    event_tallies: list = field(default_factory=list)            # per window Counter((t, p))
    contributions: int = 0


class StatsCollector:
    """Buffers observations per window and resolves them when the window closes.

    A contribution only counts towards a utility numerator once the fate of
    its partial match is known, and that is only certain at window close.
    """

    def __init__(self):
        self.enabled = True
        self._lock = threading.Lock()
        self._stats = TrainingStats()
        self._pending: dict[int, list[ContributionObservation]] = defaultdict(list)
        self._completed: dict[int, dict[int, bool]] = defaultdict(dict)

    @property
    def contribution_count(self) -> int:
        return self._stats.contributions

    @property
    def window_count(self) -> int:
        return len(self._stats.window_tallies)

    def record(self, obs: Observation) -> None:
        with self._lock:
            if isinstance(obs, CompletionObservation):
                self._completed[obs.window_id].setdefault(obs.pm_id, obs.completed)
                return
            self._stats.processed[obs.event_type, obs.position, obs.state_before] += 1
            self._stats.contributions += 1
            self._pending[obs.window_id].append(obs)

    def window_closed(self, window_id: int, event_tally: Mapping | None = None,
                      virtual: bool = True) -> None:
        """Resolve a window. ``virtual=False`` keeps it out of W_stat."""
        with self._lock:
            self._resolve(window_id, event_tally, virtual)

    def _resolve(self, window_id, event_tally=None, virtual=True):
        st = self._stats
        done = self._completed.pop(window_id, {})
        tally = Counter()
        for ob in self._pending.pop(window_id, ()):
            key = (ob.event_type, ob.position, ob.state_before)
            tally[key] += 1
            ok = done.get(ob.pm_id, False)
            if ok and ob.contributed:
                st.useful[key] += 1
            st.pm_pairings[ob.position, ob.state_before] += 1
            if ok:
                st.pm_completed[ob.position, ob.state_before] += 1
        if virtual:
            st.window_tallies.append(tally)
            if event_tally is not None:
                st.event_tallies.append(Counter(event_tally))

    def snapshot(self) -> TrainingStats:
        """Immutable copy; windows still buffered are resolved into the copy
        (not into the collector) and kept out of W_stat."""
        with self._lock:
            pending = {w: list(obs) for w, obs in self._pending.items()}
            completed = {w: dict(d) for w, d in self._completed.items()}
            stats = copy.deepcopy(self._stats)
        if pending:
            scratch = StatsCollector()
            scratch._stats = stats
            scratch._pending.update(pending)
            scratch._completed.update(completed)
            for wid in sorted(pending):
                scratch._resolve(wid, virtual=False)
        return stats

    def reset(self) -> None:
        with self._lock:
            self._stats = TrainingStats()
            self._pending.clear()
            self._completed.clear()


def collect(observations: Iterable[Observation]) -> TrainingStats:
    c = StatsCollector()
    for ob in observations:
        c.record(ob)
    return c.snapshot()


def _as_stats(source) -> TrainingStats:
    if isinstance(source, TrainingStats):
        return source
    if isinstance(source, StatsCollector):
        return source.snapshot()
    return collect(source)


class UtilityTable:
    """Dense ``M x N x K`` table of weighted utilities.

    ``N = ceil(ws / bs)`` position bins and ``K`` partial-match states. Cells
    are read through :meth:`lookup` in constant time.
    """

    def __init__(self, cells: np.ndarray, window_size: int, bin_size: int,
                 gamma_index: tuple[int, ...], samples: int = 0):
        self.cells = np.ascontiguousarray(cells, dtype=np.float64)
        self.type_count, self.bins, self.gamma_count = self.cells.shape
        self.window_size = window_size
        self.bin_size = bin_size
        self.gamma_index = tuple(gamma_index)
        self.samples = samples
        self.flat = array("d", self.cells.ravel().tolist())

    def lookup(self, event_type: int, position: int, state: int) -> float:
        k = self.gamma_index[state]
        if k < 0 or not 0 <= event_type < self.type_count or not 0 <= position < self.window_size:
            raise IndexError(f"no utility cell for type={event_type} pos={position} state={state}")
        return self.flat[(event_type * self.bins + position // self.bin_size) * self.gamma_count + k]

    @property
    def max_utility(self) -> float:
        return float(self.cells.max()) if self.cells.size else 0.0

    def __eq__(self, other):
        return (isinstance(other, UtilityTable) and self.window_size == other.window_size
                and self.bin_size == other.bin_size and self.gamma_index == other.gamma_index
                and np.array_equal(self.cells, other.cells))

    def to_json(self) -> dict:
        nz = np.argwhere(self.cells != 0)
        return {"M": self.type_count, "ws": self.window_size, "bs": self.bin_size,
                "K": self.gamma_count, "samples": self.samples,
                "gamma_index": list(self.gamma_index),
                "cells": [[int(t), int(b), int(k), float(self.cells[t, b, k])] for t, b, k in nz]}

    @classmethod
    def from_json(cls, obj: dict) -> "UtilityTable":
        ws, bs = int(obj["ws"]), int(obj["bs"])
        cells = np.zeros((int(obj["M"]), -(-ws // bs), int(obj["K"])))
        for t, b, k, v in obj["cells"]:
            cells[int(t), int(b), int(k)] = float(v)
        return cls(cells, ws, bs, tuple(obj["gamma_index"]), int(obj.get("samples", 0)))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "UtilityTable":
        return cls.from_json(json.loads(Path(path).read_text()))


def utility_ratios(source, patterns: PatternSet, type_count: int, window_size: int,
                   bin_size: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Numerator and denominator arrays, summed within each position bin."""
    st = _as_stats(source)
    bins = -(-window_size // bin_size)
    num = np.zeros((type_count, bins, patterns.gamma_count))
    den = np.zeros_like(num)
    for (t, p, s), n in st.processed.items():
        b = min(p, window_size - 1) // bin_size
        k = patterns.gamma_index[s]
        den[t, b, k] += n
        num[t, b, k] += st.useful.get((t, p, s), 0)
    return num, den


def build_utility_table(source, patterns: PatternSet, type_count: int, window_size: int,
                        bin_size: int = 1, min_observations: int = DEFAULT_MIN_OBSERVATIONS,
                        weights: Mapping[int, float] | None = None) -> UtilityTable:
    """Build the utility table from observations (or a collector / snapshot).

    Each cell is ``w_q * completed_contributions / processed`` over the bin's
    positions (ratio of sums); cells never processed hold 0.
    """
    st = _as_stats(source)
    if st.contributions < min_observations:
        raise NotReady(f"{st.contributions} contribution observations, need {min_observations}")
    if bin_size < 1:
        raise ValueError("bin_size must be >= 1")
    num, den = utility_ratios(st, patterns, type_count, window_size, bin_size)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(den > 0, num / np.where(den > 0, den, 1), 0.0)
    w = weights or patterns.weights
    state_weight = np.array([w[patterns.machine_of_state[s].pattern_id] for s in patterns.pm_states])
    return UtilityTable(ratio * state_weight, window_size, bin_size, patterns.gamma_index,
                        st.contributions)


class UtilityModel:
    """Holds the table the shedder reads; retraining swaps it atomically."""

    def __init__(self, patterns: PatternSet, type_count: int, window_size: int,
                 bin_size: int = 1, min_observations: int = DEFAULT_MIN_OBSERVATIONS):
        self.patterns = patterns
        self.type_count = type_count
        self.window_size = window_size
        self.bin_size = bin_size
        self.min_observations = min_observations
        self.table: UtilityTable | None = None

    def retrain(self, source) -> UtilityTable | None:
        """Rebuild from fresh observations; below the sample minimum the
        previous table is kept."""
        try:
            table = build_utility_table(source, self.patterns, self.type_count, self.window_size,
                                        self.bin_size, self.min_observations)
        except NotReady:
            return self.table
        self.table = table
        return table
