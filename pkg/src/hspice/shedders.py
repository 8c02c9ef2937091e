"""Shedding deciders: the state-aware one and simplified baselines.

Every decider reads the current :class:`~hspice.planner.ShedPlan` from a
shared :class:`~hspice.planner.PlanCell` and never drops while the plan says
the operator is not overloaded. Baselines derive their own thresholds from
the plan's drop amount and cache them per plan object.

The baselines are deliberately small stand-ins that follow one-line
behavioural descriptions (event type and position utility, per-type
utility from pattern repetition, partial-match dropping by completion
probability); they are not reimplementations of the original systems.
"""
from __future__ import annotations

import random
from collections import Counter, defaultdict
from typing import Mapping

from .events import Event
from .operator import NeverDrop, PartialMatch, ShedDecider
from .patterns import PatternSet
from .planner import NEVER_DROP, PlanCell, ShedPlan, threshold_array, threshold_for
from .stats import TrainingStats, UtilityTable

SHEDDER_KINDS = ("none", "hspice", "random", "espice_lite", "bl_lite", "pspice_lite")


class ShedderConfigError(ValueError):
    pass


class HspiceShedder(ShedDecider):
    """Drops an (event, partial match) pairing iff its utility is at most ``u_th``."""

    checks_pairings = True
    level = "pairing"

    def __init__(self, table: UtilityTable, cell: PlanCell):
        self.cell = cell
        self.set_table(table)

    def set_table(self, table: UtilityTable) -> None:
        # one tuple rebind keeps table swaps atomic for the hot path
        self._t = (table.flat, table.bins, table.bin_size, table.gamma_count, table.gamma_index,
                   table.window_size - 1)
        self.table = table

    def drop(self, event_type: int, position: int, state: int) -> bool:
        plan = self.cell.plan
        if not plan.overloaded:
            return False
        flat, bins, bs, k, gidx, last = self._t
        if position > last:
            position = last
        return flat[(event_type * bins + position // bs) * k + gidx[state]] <= plan.u_th


def hspice_drop(shedder: HspiceShedder, event_type: int, position: int, state: int) -> bool:
    return shedder.drop(event_type, position, state)


class RandomShedder(ShedDecider):
    """Bernoulli drop per (event, window).

    With a fixed ``p`` it always drops with that probability; without one it
    drops with ``rho / ws`` while the plan reports overload.
    """

    checks_events = True
    level = "event"

    def __init__(self, p: float | None = None, seed: int = 0, cell: PlanCell | None = None,
                 window_size: int | None = None):
        if p is None and (cell is None or window_size is None):
            raise ShedderConfigError("random shedder needs either p or a plan cell and window size")
        if p is not None and not 0.0 <= p <= 1.0:
            raise ShedderConfigError(f"p must lie in [0, 1], got {p}")
        self.p = p
        self.cell = cell
        self.window_size = window_size
        self.rng = random.Random(seed)

    def drop_event(self, event: Event, window_id: int, position: int) -> bool:
        if self.p is not None:
            return self.rng.random() < self.p
        plan = self.cell.plan
        if not plan.overloaded:
            return False
        return self.rng.random() < plan.rho / self.window_size


class _PlanCached:
    """Recomputes a derived threshold only when a new plan is published."""

    def _threshold(self) -> float:
        plan = self.cell.plan
        if plan is not self._plan:
            self._plan = plan
            self._value = self._derive(plan) if plan.overloaded else NEVER_DROP
        return self._value

    def _derive(self, plan: ShedPlan):
        raise NotImplementedError


def _mean_tally(tallies) -> dict:
    total: dict = defaultdict(float)
    for t in tallies:
        for k, v in t.items():
            total[k] += v
    n = max(1, len(tallies))
    return {k: v / n for k, v in total.items()}


class EspiceLite(_PlanCached, ShedDecider):
    """Window-level drop on (type, position) utility.

    Utility of an event at (type, position bin) is the weighted number of
    completed-match contributions per occurrence. The threshold sheds ``rho``
    events per window over the training occurrence distribution.
    """

    checks_events = True
    level = "event"

    def __init__(self, stats: TrainingStats, patterns: PatternSet, type_count: int,
                 window_size: int, cell: PlanCell, bin_size: int = 1):
        self.cell = cell
        self.window_size = window_size
        self.bin_size = bin_size
        self.bins = -(-window_size // bin_size)
        self.type_count = type_count
        last = window_size - 1
        weight_of = [patterns.machine_of_state[s].weight for s in range(patterns.state_total)]
        useful = Counter()
        for (t, p, s), n in stats.useful.items():
            useful[t, min(p, last) // bin_size] += weight_of[s] * n
        occ = Counter()
        for (t, p), o in _mean_tally(stats.event_tallies).items():
            occ[t, min(p, last) // bin_size] += o
        windows = max(1, len(stats.event_tallies))
        self.utility = [0.0] * (type_count * self.bins)
        for (t, b), o in occ.items():
            if 0 <= t < type_count:
                self.utility[t * self.bins + b] = useful[t, b] / (o * windows)
        self._occ = {(t, b): o for (t, b), o in occ.items() if 0 <= t < type_count}
        self._array = threshold_array(
            (self.utility[t * self.bins + b], o) for (t, b), o in self._occ.items())
        self._plan = None
        self._value = NEVER_DROP

    def _derive(self, plan: ShedPlan) -> float:
        return threshold_for(self._array, plan.rho)

    def drop_event(self, event: Event, window_id: int, position: int) -> bool:
        th = self._threshold()
        if th == NEVER_DROP:
            return False
        t = event.event_type
        if not 0 <= t < self.type_count:
            return True
        b = min(position, self.window_size - 1) // self.bin_size
        return self.utility[t * self.bins + b] <= th


def type_repetition(patterns: PatternSet) -> Counter:
    """Weighted count of pattern steps mentioning each type (negations included)."""
    rep = Counter()
    for spec in patterns.specs:
        for step in spec.steps:
            for t in step.types:
                rep[t] += spec.weight * step.units if step.positive else spec.weight
    return rep


class BlLite(_PlanCached, ShedDecider):
    """Per-type utility = pattern repetition x per-window frequency.

    Whole types are dropped lowest utility first; the first type that does
    not fit entirely into ``rho`` is sampled uniformly.
    """

    checks_events = True
    level = "event"

    def __init__(self, stats: TrainingStats, patterns: PatternSet, type_count: int,
                 cell: PlanCell, seed: int = 0):
        self.cell = cell
        self.rng = random.Random(seed)
        rep = type_repetition(patterns)
        freq = Counter()
        for (t, _p), o in _mean_tally(stats.event_tallies).items():
            freq[t] += o
        self.frequency = {t: freq[t] for t in range(type_count)}
        self.utility = {t: rep[t] * freq[t] for t in range(type_count)}
        self.order = sorted(range(type_count), key=lambda t: (self.utility[t], t))
        self._plan = None
        self._value = NEVER_DROP

    def _derive(self, plan: ShedPlan):
        """``(fully dropped types, partially sampled type, its probability)``."""
        budget = float(plan.rho)
        full = set()
        for t in self.order:
            f = self.frequency[t]
            if f <= 0:
                full.add(t)
                continue
            if budget >= f - 1e-12:
                full.add(t)
                budget -= f
            else:
                return full, t, budget / f
        return full, None, 0.0

    def drop_event(self, event: Event, window_id: int, position: int) -> bool:
        plan = self._threshold()
        if plan == NEVER_DROP:
            return False
        full, partial, p = plan
        t = event.event_type
        if t in full:
            return True
        if t == partial:
            return self.rng.random() < p
        return t not in self.frequency


class PspiceLite(_PlanCached, ShedDecider):
    """Drops partial matches whose completion probability is lowest.

    Utility of a partial match at (position bin, state) is its pattern weight
    times the fraction of training pairings there whose match completed;
    processing cost is taken as uniform. The threshold sheds ``rho_v``
    pairings per window over the distribution of droppable pairings. Root
    matches are never dropped (the operator does not offer them), so pairings
    in initial states, which only roots occupy, are left out of that
    distribution.
    """

    checks_pms = True
    level = "pairing"

    def __init__(self, stats: TrainingStats, patterns: PatternSet, window_size: int,
                 cell: PlanCell, bin_size: int = 1):
        self.cell = cell
        self.window_size = window_size
        self.bin_size = bin_size
        self.states = patterns.state_total
        bins = -(-window_size // bin_size)
        last = window_size - 1
        pairings = Counter()
        completed = Counter()
        for (p, s), n in stats.pm_pairings.items():
            pairings[min(p, last) // bin_size, s] += n
        for (p, s), n in stats.pm_completed.items():
            completed[min(p, last) // bin_size, s] += n
        self.utility = [0.0] * (bins * self.states)
        for (b, s), n in pairings.items():
            w = patterns.machine_of_state[s].weight
            self.utility[b * self.states + s] = w * completed[b, s] / n
        initial = {m.initial for m in patterns.machines}
        occ = Counter()
        for (_t, p, s), o in _mean_tally(stats.window_tallies).items():
            if s not in initial:
                occ[min(p, last) // bin_size, s] += o
        self._array = threshold_array((self.utility[b * self.states + s], o) for (b, s), o in occ.items())
        self._plan = None
        self._value = NEVER_DROP

    def _derive(self, plan: ShedPlan) -> float:
        return threshold_for(self._array, plan.rho_v)

    def drop_pm(self, pm: PartialMatch, position: int) -> bool:
        th = self._threshold()
        if th == NEVER_DROP:
            return False
        b = min(position, self.window_size - 1) // self.bin_size
        return self.utility[b * self.states + pm.state] <= th


def make_shedder(config: Mapping | None, cell: PlanCell, model=None,
                 patterns: PatternSet | None = None, type_count: int | None = None,
                 seed: int = 0, window_size: int | None = None) -> ShedDecider:
    """Build a decider from ``{"shedder": kind, "params": {...}}``.

    ``model`` is a :class:`~hspice.model.ShedModel`; every kind except
    ``none`` and fixed-probability ``random`` needs it.
    """
    config = dict(config or {"shedder": "none"})
    kind = config.get("shedder", "none")
    params = dict(config.get("params") or {})
    if kind not in SHEDDER_KINDS:
        raise ShedderConfigError(f"unknown shedder {kind!r}; expected one of {', '.join(SHEDDER_KINDS)}")
    if kind == "none":
        return NeverDrop()
    seed = int(params.pop("seed", seed))
    if kind == "random":
        p = params.get("p")
        ws = window_size or params.get("window_size") or (model.window_size if model is not None else None)
        return RandomShedder(None if p is None else float(p), seed, cell, ws)
    if model is None:
        raise ShedderConfigError(f"shedder {kind!r} needs a trained model")
    if kind == "hspice":
        return HspiceShedder(model.table, cell)
    if patterns is None:
        raise ShedderConfigError(f"shedder {kind!r} needs the pattern set")
    m = type_count if type_count is not None else model.table.type_count
    if kind == "espice_lite":
        return EspiceLite(model.stats, patterns, m, model.window_size, cell,
                          int(params.get("bin_size", model.table.bin_size)))
    if kind == "bl_lite":
        return BlLite(model.stats, patterns, m, cell, seed)
    return PspiceLite(model.stats, patterns, model.window_size, cell,
                      int(params.get("bin_size", model.table.bin_size)))
