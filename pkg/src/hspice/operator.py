"""Single CEP operator: windows, partial matches and the shedding hook."""
from __future__ import annotations

import json
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from .events import Event, WindowAssigner, WindowSpec
from .patterns import PatternSet, Policy, StateMachine, Transition
from .stats import ABANDONED, CompletionObservation, ContributionObservation, StatsCollector

DEFAULT_PM_CAP = 1024


@dataclass(frozen=True)
class ComplexEvent:
    pattern_id: int
    window_id: int
    seqs: tuple[int, ...]
    ts_detect: int = field(default=0, compare=False)

    @property
    def key(self) -> tuple[int, int, tuple[int, ...]]:
        return (self.pattern_id, self.window_id, self.seqs)

    def to_json(self) -> dict:
        return {"pattern": self.pattern_id, "window": self.window_id, "seqs": list(self.seqs),
                "ts_detect": self.ts_detect}

    @classmethod
    def from_json(cls, obj: dict) -> "ComplexEvent":
        return cls(int(obj["pattern"]), int(obj["window"]), tuple(obj["seqs"]),
                   int(obj.get("ts_detect", 0)))


def dump_complex_events(path: str | Path, events: Iterable[ComplexEvent]) -> None:
    with open(path, "w") as fh:
        for ce in events:
            fh.write(json.dumps(ce.to_json()) + "\n")


def load_complex_events(path: str | Path) -> list[ComplexEvent]:
    with open(path) as fh:
        return [ComplexEvent.from_json(json.loads(line)) for line in fh if line.strip()]


class PartialMatch:
    """A live state-machine instance inside one window.

    Root matches sit at the initial state for the whole window and spawn a
    new match whenever a start event arrives.
    """

    __slots__ = ("pm_id", "machine", "state", "bindings", "window_id", "parent", "root")

    def __init__(self, pm_id: int, machine: StateMachine, state: int, bindings: tuple,
                 window_id: int, parent: "PartialMatch | None" = None, root: bool = False):
        self.pm_id = pm_id
        self.machine = machine
        self.state = state
        self.bindings = bindings
        self.window_id = window_id
        self.parent = parent
        self.root = root

    @property
    def pattern_id(self) -> int:
        return self.machine.pattern_id

    def __repr__(self):
        return (f"PartialMatch(id={self.pm_id}, pattern={self.pattern_id}, state={self.state}, "
                f"seqs={[e.seq for e in self.bindings]})")


class ShedDecider:
    """Load shedder interface consulted by the operator.

    ``drop_event`` decides per (event, window), ``drop_pm`` may discard a
    whole partial match, ``drop`` decides per (event, partial match) pairing.
    Subclasses switch on the hooks they use via the ``checks_*`` flags so the
    operator skips the others.
    """

    checks_events = False
    checks_pms = False
    checks_pairings = False
    level = "pairing"  # unit the drop ratio is reported in: "pairing" or "event"

    def drop_event(self, event: Event, window_id: int, position: int) -> bool:
        return False

    def drop_pm(self, pm: PartialMatch, position: int) -> bool:
        return False

    def drop(self, event_type: int, position: int, state: int) -> bool:
        return False

    def window_closed(self, window_id: int) -> None:
        pass


class NeverDrop(ShedDecider):
    pass


@dataclass
class OperatorMetrics:
    events: int = 0
    event_windows: int = 0          # (event, window) pairings
    event_windows_dropped: int = 0
    pairings: int = 0               # (event, PM) pairings offered to the decider
    pairings_dropped: int = 0
    steps: int = 0                  # state-machine evaluations
    decisions: int = 0              # decider calls
    pms_created: int = 0
    pms_dropped: int = 0
    pm_cap_overflow: int = 0
    complex_events: int = 0
    windows_closed: int = 0

    def drop_ratio(self, level: str = "pairing") -> float:
        if level == "event":
            return self.event_windows_dropped / self.event_windows if self.event_windows else 0.0
        return self.pairings_dropped / self.pairings if self.pairings else 0.0

    def snapshot(self) -> "OperatorMetrics":
        return OperatorMetrics(**self.__dict__)


class _Window:
    __slots__ = ("window_id", "pms", "next_id", "completed", "abandoned", "shed",
                 "collect", "contributions", "events")

    def __init__(self, window_id: int, collect: bool):
        self.window_id = window_id
        self.pms: list[PartialMatch] = []
        self.next_id = 0
        self.completed: set[int] = set()
        self.abandoned: list[int] = []
        self.shed = False
        self.collect = collect
        self.contributions: list[ContributionObservation] = []
        self.events: Counter = Counter()


class CEPOperator:
    """Matches a pattern set over sliding windows, one event at a time.

    Per event and containing window (in window-id order) every live partial
    match (in id order) is first offered to the decider and then stepped.
    Under skip-till-any-match an advancing match is cloned and the original
    stays; under skip-till-next-match it advances in place. Root matches
    always clone so new matches can start anywhere in the window.
    """

    def __init__(self, patterns: PatternSet, window: WindowSpec,
                 decider: ShedDecider | None = None, collector: StatsCollector | None = None,
                 pm_cap: int = DEFAULT_PM_CAP, protect_negations: bool = False,
                 sink: Callable[[ComplexEvent], None] | None = None):
        self.patterns = patterns
        self.window = window
        self.decider = decider or NeverDrop()
        self.collector = collector
        self.pm_cap = pm_cap
        self.protect_negations = protect_negations
        self.sink = sink
        self.assigner = WindowAssigner(window)
        self.windows: dict[int, _Window] = {}
        self.metrics = OperatorMetrics()
        self._closed_ids: set[int] = set()

    def _open(self, wid: int) -> _Window:
        collect = self.collector is not None and self.collector.enabled
        win = _Window(wid, collect)
        for m in self.patterns.machines:
            win.pms.append(PartialMatch(win.next_id, m, m.initial, (), wid, root=True))
            win.next_id += 1
        self.windows[wid] = win
        return win

    def process_event(self, event: Event) -> list[ComplexEvent]:
        self.metrics.events += 1
        out: list[ComplexEvent] = []
        for wid, pos in self.assigner.assign(event):
            win = self.windows.get(wid)
            if win is None:
                win = self._open(wid)
            self._process_in_window(win, event, pos, out)
        for inst in self.assigner.pop_closed():
            self.close_window(inst.window_id)
        return out

    def _process_in_window(self, win: _Window, event: Event, pos: int,
                           out: list[ComplexEvent]) -> None:
        m = self.metrics
        d = self.decider
        m.event_windows += 1
        if win.collect:
            win.events[event.event_type, pos] += 1
        if d.checks_events:
            m.decisions += 1
            if d.drop_event(event, win.window_id, pos):
                m.event_windows_dropped += 1
                win.shed = True
                return
        et = event.event_type
        wid = win.window_id
        survivors: list[PartialMatch] = []
        spawned: list[PartialMatch] = []
        for pm in win.pms:
            m.pairings += 1
            if d.checks_pms and not pm.root:
                m.decisions += 1
                if d.drop_pm(pm, pos):
                    m.pairings_dropped += 1
                    m.pms_dropped += 1
                    win.shed = True
                    win.abandoned.append(pm.pm_id)
                    continue
            machine = pm.machine
            s = pm.state
            outcome = None
            if d.checks_pairings:
                m.decisions += 1
                if d.drop(et, pos, s):
                    if self.protect_negations:
                        outcome = machine.step(s, pm.bindings, event)
                        m.steps += 1
                    if outcome is None or outcome.kind is not Transition.ABANDON:
                        m.pairings_dropped += 1
                        win.shed = True
                        survivors.append(pm)
                        continue
            if outcome is None:
                outcome = machine.step(s, pm.bindings, event)
                m.steps += 1
            kind = outcome.kind
            if kind is Transition.NO_CHANGE:
                survivors.append(pm)
                if win.collect:
                    win.contributions.append(ContributionObservation(pm.pm_id, s, s, et, pos, wid))
            elif kind is Transition.ABANDON:
                win.abandoned.append(pm.pm_id)
                if win.collect:
                    win.contributions.append(
                        ContributionObservation(pm.pm_id, s, ABANDONED, et, pos, wid))
            elif kind is Transition.ADVANCE:
                survivors.append(pm)
                if pm.root or machine.policy is Policy.ANY_MATCH:
                    if len(win.pms) + len(spawned) >= self.pm_cap:
                        m.pm_cap_overflow += 1
                        if win.collect:
                            win.contributions.append(ContributionObservation(pm.pm_id, s, s, et, pos, wid))
                        continue
                    child = PartialMatch(win.next_id, machine, outcome.next_state,
                                         pm.bindings + (event,), wid, parent=pm)
                    win.next_id += 1
                    m.pms_created += 1
                    spawned.append(child)
                    target = child.pm_id
                else:
                    pm.state = outcome.next_state
                    pm.bindings = pm.bindings + (event,)
                    target = pm.pm_id
                if win.collect:
                    win.contributions.append(
                        ContributionObservation(target, s, outcome.next_state, et, pos, wid))
            else:  # COMPLETE
                bindings = pm.bindings + (event,)
                if pm.root or machine.policy is Policy.ANY_MATCH:
                    survivors.append(pm)
                    done_id = win.next_id
                    win.next_id += 1
                    m.pms_created += 1
                    self._mark_completed(win, done_id, pm)
                else:
                    done_id = pm.pm_id
                    self._mark_completed(win, done_id, pm.parent)
                if win.collect:
                    win.contributions.append(
                        ContributionObservation(done_id, s, machine.final, et, pos, wid))
                ce = ComplexEvent(machine.pattern_id, wid, tuple(e.seq for e in bindings),
                                  event.timestamp)
                m.complex_events += 1
                out.append(ce)
                if self.sink is not None:
                    self.sink(ce)
        survivors.extend(spawned)
        win.pms = survivors

    def _mark_completed(self, win: _Window, pm_id: int, ancestor: PartialMatch | None) -> None:
        win.completed.add(pm_id)
        while ancestor is not None and not ancestor.root and ancestor.pm_id not in win.completed:
            win.completed.add(ancestor.pm_id)
            ancestor = ancestor.parent

    def close_window(self, window_id: int, complete: bool = True) -> list[CompletionObservation]:
        """Close a window; open matches become not-completed observations.

        Returns the completion observations produced by the close itself.
        ``complete=False`` marks a window cut short by end of stream, which
        is kept out of the training statistics.
        """
        if window_id in self._closed_ids:
            raise RuntimeError(f"window {window_id} closed twice")
        self._closed_ids.add(window_id)
        win = self.windows.pop(window_id, None)
        self.metrics.windows_closed += 1
        self.decider.window_closed(window_id)
        if win is None:
            return []
        failed = [pid for pid in win.abandoned if pid not in win.completed]
        failed += [pm.pm_id for pm in win.pms if not pm.root and pm.pm_id not in win.completed]
        closing = [CompletionObservation(pid, window_id, False) for pid in sorted(set(failed))]
        if win.collect and not win.shed and complete and self.collector is not None:
            c = self.collector
            for ob in win.contributions:
                c.record(ob)
            for pid in sorted(win.completed):
                c.record(CompletionObservation(pid, window_id, True))
            for ob in closing:
                c.record(ob)
            c.window_closed(window_id, win.events)
        return closing

    def flush(self) -> None:
        """End of stream: close remaining (partial) windows."""
        for inst in self.assigner.flush():
            self.close_window(inst.window_id, complete=False)

    def run(self, events: Iterable[Event]) -> list[ComplexEvent]:
        out: list[ComplexEvent] = []
        for ev in events:
            out.extend(self.process_event(ev))
        self.flush()
        return out


class ThroughputProbe:
    """Busy-time service rate: EWMA of events over EWMA of busy seconds.

    Idle time never enters the estimate. Averaging numerator and denominator
    separately makes a constant-weight run equal to events / busy time.
    """

    def __init__(self, alpha: float = 0.05, warmup_events: int = 100):
        self.alpha = alpha
        self.warmup_events = warmup_events
        self.total_events = 0
        self.total_busy = 0.0
        self._ev = None
        self._busy = None

    def record(self, events: int, busy_seconds: float) -> None:
        if events <= 0 or busy_seconds <= 0:
            return
        self.total_events += events
        self.total_busy += busy_seconds
        if self._ev is None:
            self._ev, self._busy = float(events), busy_seconds
        else:
            a = self.alpha
            self._ev += a * (events - self._ev)
            self._busy += a * (busy_seconds - self._busy)

    def rate(self) -> float | None:
        if self._ev is None or self.total_events < self.warmup_events:
            return None
        return self._ev / self._busy

    def timed(self, fn, *args):
        """Run ``fn(*args)`` as one event and record its wall-clock cost."""
        t0 = time.perf_counter()
        result = fn(*args)
        self.record(1, time.perf_counter() - t0)
        return result


def throughput_probe(probe: ThroughputProbe) -> float | None:
    return probe.rate()
