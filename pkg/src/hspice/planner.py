"""Overload detection and shed plans.

The detector turns the input rate ``R`` and service rate ``mu`` into a drop
amount per window, maps it onto the virtual window (the expected number of
(event, partial match) pairings per window) and reads the utility threshold
that sheds that many pairings off a precomputed threshold array.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .stats import NotReady, UtilityTable

NEVER_DROP = -math.inf
ALWAYS_DROP = math.inf


class PlanConfigError(ValueError):
    pass


def _round_half_up(x: float) -> int:
    # the epsilon absorbs float error on exact halves such as 17.4999999...
    return math.floor(x + 0.5 + 1e-9)


def compute_drop_amount(rate: float, throughput: float, window_size: int) -> int:
    """Events to drop per window: ``(1 - mu / R) * ws``, half-up, never negative."""
    if rate <= 0 or throughput <= 0 or window_size < 1:
        raise ValueError(f"need R > 0, mu > 0, ws >= 1 (got {rate}, {throughput}, {window_size})")
    if rate <= throughput:
        return 0
    return _round_half_up(window_size * (rate - throughput) / rate)


@dataclass(frozen=True)
class VirtualWindow:
    """Average occurrences of each (type, position, state) pairing per window."""

    occurrences: Mapping[tuple[int, int, int], float]
    window_size: int

    @property
    def size(self) -> float:
        """ws_v: expected pairings per window."""
        return math.fsum(self.occurrences.values())

    @property
    def avg_occurrence(self) -> float:
        """avg_O: pairings per event."""
        return self.size / self.window_size


def build_virtual_window(w_stat: Sequence[Mapping[tuple[int, int, int], float]],
                         window_size: int) -> VirtualWindow:
    if not w_stat:
        raise NotReady("no training windows")
    total: dict = defaultdict(float)
    for tally in w_stat:
        for key, n in tally.items():
            total[key] += n
    n = len(w_stat)
    occ = {key: v / n for key, v in sorted(total.items()) if v > 0}
    return VirtualWindow(occ, window_size)


@dataclass(frozen=True)
class ThresholdArray:
    """``values[i]`` is the smallest utility whose accumulated occurrences reach ``i + 1``."""

    values: tuple[float, ...]

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]


def threshold_array(weighted: Iterable[tuple[float, float]]) -> ThresholdArray:
    """Build a threshold array from ``(utility, occurrences)`` pairs."""
    mass: dict[float, float] = defaultdict(float)
    for u, o in weighted:
        if o > 0:
            mass[u] += o
    if not mass:
        return ThresholdArray(())
    total = math.fsum(mass.values())
    length = math.ceil(total - 1e-9)
    out: list[float] = []
    acc = 0.0
    for u in sorted(mass):
        acc += mass[u]
        upto = min(length, _round_half_up(acc))
        if upto > len(out):
            out.extend([u] * (upto - len(out)))
    top = max(mass)
    out.extend([top] * (length - len(out)))
    # rounding can leave the top utility without a slot; the last slot is always it
    out[-1] = top
    return ThresholdArray(tuple(out))


def build_threshold_array(vw: VirtualWindow, table: UtilityTable) -> ThresholdArray:
    if vw.window_size != table.window_size:
        raise PlanConfigError(
            f"virtual window built for ws={vw.window_size}, utility table for ws={table.window_size}")
    last = table.window_size - 1
    pairs = []
    for (t, p, s), o in vw.occurrences.items():
        if not 0 <= t < table.type_count or table.gamma_index[s] < 0:
            raise PlanConfigError(f"virtual-window triplet {(t, p, s)} has no utility cell")
        pairs.append((table.lookup(t, min(p, last), s), o))
    return threshold_array(pairs)


def threshold_for(array: ThresholdArray | Sequence[float], rho_v: float) -> float:
    """Utility threshold that sheds ``rho_v`` pairings.

    Picks the smallest utility whose accumulated occurrences cover
    ``rho_v``; ``rho_v = 0`` sheds nothing and anything past the array
    sheds everything.
    """
    if rho_v <= 0:
        return NEVER_DROP
    if rho_v > len(array):
        return ALWAYS_DROP
    return array[max(1, math.ceil(rho_v - 1e-9)) - 1]


@dataclass(frozen=True)
class ShedPlan:
    overloaded: bool = False
    drop_interval: int = 0
    rho: int = 0
    rho_v: float = 0.0
    u_th: float = NEVER_DROP
    rate: float = 0.0
    throughput: float = 0.0
    latency: float = 0.0
    time: float = 0.0

    def to_json(self) -> dict:
        def num(x):
            return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")
        return {"t": self.time, "overloaded": self.overloaded, "R": self.rate, "mu": self.throughput,
                "latency": self.latency, "rho": self.rho, "rho_v": self.rho_v, "u_th": num(self.u_th)}


NO_SHEDDING = ShedPlan()


class PlanCell:
    """Single-writer slot holding the current immutable plan.

    Rebinding one attribute is atomic for readers, so the operator sees
    either the old plan or the new one, never a mix.
    """

    __slots__ = ("plan",)

    def __init__(self, plan: ShedPlan = NO_SHEDDING):
        self.plan = plan

    def publish(self, plan: ShedPlan) -> None:
        self.plan = plan


@dataclass
class ControlConfig:
    latency_bound: float = 1.0
    safety_fraction: float = 0.8
    interval: float = 0.1
    half_life: float = 1.0


def control_tick(latency: float, rate: float, throughput: float, window_size: int,
                 vw: VirtualWindow, array: ThresholdArray, config: ControlConfig,
                 now: float = 0.0) -> ShedPlan:
    """One overload-detector decision."""
    overloaded = latency >= config.safety_fraction * config.latency_bound and rate > throughput
    if not overloaded:
        return ShedPlan(False, window_size, 0, 0.0, NEVER_DROP, rate, throughput, latency, now)
    rho = compute_drop_amount(rate, throughput, window_size)
    if rho == 0:
        return ShedPlan(False, window_size, 0, 0.0, NEVER_DROP, rate, throughput, latency, now)
    rho_v = min(rho * vw.avg_occurrence, vw.size)
    return ShedPlan(True, window_size, rho, rho_v, threshold_for(array, rho_v), rate, throughput,
                    latency, now)


class Ewma:
    """Exponentially weighted mean with a half-life in sample-interval units."""

    def __init__(self, half_life: float, interval: float):
        self.alpha = 1.0 - 0.5 ** (interval / half_life)
        self.value: float | None = None

    def update(self, sample: float) -> float:
        if self.value is None:
            self.value = sample
        else:
            self.value += self.alpha * (sample - self.value)
        return self.value


@dataclass
class OverloadController:
    """Periodic detector: smooths R (and optionally mu), publishes plans.

    Queue latency is used as sampled; smoothing it would delay detection by
    about one half-life, longer than the latency bound allows.
    """

    window_size: int
    vw: VirtualWindow
    array: ThresholdArray
    config: ControlConfig = field(default_factory=ControlConfig)
    cell: PlanCell = field(default_factory=PlanCell)
    trace: list | None = None

    def __post_init__(self):
        self._rate = Ewma(self.config.half_life, self.config.interval)
        self._mu = Ewma(self.config.half_life, self.config.interval)

    @property
    def plan(self) -> ShedPlan:
        return self.cell.plan

    def tick(self, now: float, latency: float | None, rate: float | None,
             throughput: float | None) -> ShedPlan:
        """Feed one monitoring sample; missing estimates keep the previous plan."""
        if latency is None or rate is None or throughput is None:
            return self.cell.plan
        r = self._rate.update(rate)
        mu = self._mu.update(throughput)
        plan = control_tick(latency, r, mu, self.window_size, self.vw, self.array, self.config, now)
        self.cell.publish(plan)
        if self.trace is not None:
            self.trace.append(plan)
        return plan
