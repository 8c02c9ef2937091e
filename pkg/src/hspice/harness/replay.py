"""Rate-controlled replay of an event stream through the operator.

Virtual clock: event ``i`` arrives at ``i / rate``; the operator serves
events in order, each taking the cost-model time of the work it did; the
controller ticks every ``tick_interval`` seconds and sees the wait of the
oldest queued event. Everything runs on one thread, so a run is a pure
function of its inputs.

Real clock: a producer thread, the operator thread and a controller thread
share a bounded FIFO. Only meant for smoke tests.
"""
from __future__ import annotations

import math
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Sequence

from ..events import Event, WindowSpec
from ..operator import DEFAULT_PM_CAP, CEPOperator, ComplexEvent, OperatorMetrics
from ..patterns import PatternSet
from ..planner import OverloadController, ShedPlan
from .config import CostModel


class ReplayOverflow(RuntimeError):
    """The input queue grew past its hard cap; mu is probably mis-calibrated."""


@dataclass
class ReplayResult:
    detected: list[ComplexEvent]
    latencies: list[float]          # l_e per event, in stream order
    plans: list[ShedPlan]
    metrics: OperatorMetrics
    rate: float
    mu: float
    duration: float
    max_queue: int = 0
    seqs: list[int] = field(default_factory=list)

    def latency_samples(self) -> list[tuple[int, float]]:
        return list(zip(self.seqs, self.latencies))


def _work(m: OperatorMetrics) -> tuple[int, int, int, int]:
    return m.events, m.event_windows, m.steps, m.decisions


def oracle_run(events: Sequence[Event], patterns: PatternSet, window: WindowSpec,
               pm_cap: int = DEFAULT_PM_CAP) -> list[ComplexEvent]:
    """No-shedding, no rate limit: the ground truth."""
    return CEPOperator(patterns, window, pm_cap=pm_cap).run(events)


def calibrate_virtual(events: Sequence[Event], patterns: PatternSet, window: WindowSpec,
                      costs: CostModel, pm_cap: int = DEFAULT_PM_CAP) -> float:
    """Service rate of the unshedded operator under the cost model."""
    op = CEPOperator(patterns, window, pm_cap=pm_cap)
    for ev in events:
        op.process_event(ev)
    busy = costs.cost(*_work(op.metrics))
    if not events or busy <= 0:
        raise ValueError("calibration needs a non-empty prefix")
    return len(events) / busy


def calibrate_real(events: Sequence[Event], patterns: PatternSet, window: WindowSpec,
                   pm_cap: int = DEFAULT_PM_CAP) -> float:
    if not events:
        raise ValueError("calibration needs a non-empty prefix")
    op = CEPOperator(patterns, window, pm_cap=pm_cap)
    t0 = time.perf_counter()
    for ev in events:
        op.process_event(ev)
    return len(events) / max(time.perf_counter() - t0, 1e-9)


def replay_virtual(events: Sequence[Event], operator: CEPOperator, controller: OverloadController,
                   rate: float, mu: float, costs: CostModel, queue_capacity: int,
                   tick_interval: float) -> ReplayResult:
    if rate <= 0 or mu <= 0:
        raise ValueError("rate and mu must be positive")
    n = len(events)
    detected: list[ComplexEvent] = []
    latencies = [0.0] * n
    m = operator.metrics
    finish = 0.0
    next_tick = tick_interval
    max_queue = 0
    for i, ev in enumerate(events):
        arrival = i / rate
        start = max(arrival, finish)
        while next_tick <= start:
            t = next_tick
            # the head of the queue is event i when it has already arrived
            latency = t - arrival if arrival <= t else 0.0
            arrived = math.floor(t * rate + 1e-9) + 1
            before = math.floor((t - tick_interval) * rate + 1e-9) + 1 if t > tick_interval else 0
            controller.tick(t, latency, (arrived - before) / tick_interval, mu)
            next_tick += tick_interval
        waiting = min(n, math.floor(start * rate + 1e-9) + 1) - i - 1
        if waiting > max_queue:
            max_queue = waiting
            if waiting > queue_capacity:
                raise ReplayOverflow(
                    f"queue holds {waiting} events (cap {queue_capacity}) at t={start:.3f}s, "
                    f"event {ev.seq}; rate {rate:.1f}/s vs mu {mu:.1f}/s")
        w0 = _work(m)
        detected.extend(operator.process_event(ev))
        w1 = _work(m)
        finish = start + costs.cost(*(b - a for a, b in zip(w0, w1)))
        latencies[i] = finish - arrival
    operator.flush()
    return ReplayResult(detected, latencies, list(controller.trace or ()), m, rate, mu, finish,
                        max_queue, [e.seq for e in events])


def replay_real(events: Sequence[Event], operator: CEPOperator, controller: OverloadController,
                rate: float, mu: float, queue_capacity: int, tick_interval: float) -> ReplayResult:
    """Wall-clock replay with producer, operator and controller threads."""
    q: queue.Queue = queue.Queue(maxsize=queue_capacity)
    done = object()
    n = len(events)
    latencies = [0.0] * n
    detected: list[ComplexEvent] = []
    errors: list[BaseException] = []
    produced = [0]
    stop = threading.Event()
    t0 = time.perf_counter()

    def producer():
        try:
            for i, ev in enumerate(events):
                if stop.is_set():
                    return
                delay = t0 + i / rate - time.perf_counter()
                if delay > 0:
                    time.sleep(delay)
                try:
                    q.put_nowait((i, ev, time.perf_counter()))
                except queue.Full:
                    raise ReplayOverflow(f"queue full ({queue_capacity}) at event {ev.seq}") from None
                produced[0] = i + 1
        except BaseException as exc:  # surfaced to the caller below
            errors.append(exc)
            stop.set()
        finally:
            q.put((None, done, None))

    def consume():
        while True:
            i, ev, arrived = q.get()
            if ev is done:
                return
            detected.extend(operator.process_event(ev))
            latencies[i] = time.perf_counter() - arrived

    def control():
        last_count, last_t = 0, time.perf_counter()
        while not stop.wait(tick_interval):
            now = time.perf_counter()
            with q.mutex:
                head = q.queue[0] if q.queue else None
            latency = now - head[2] if head is not None and head[1] is not done else 0.0
            count = produced[0]
            controller.tick(now - t0, latency, (count - last_count) / (now - last_t), mu)
            last_count, last_t = count, now

    threads = [threading.Thread(target=producer, daemon=True), threading.Thread(target=control, daemon=True)]
    for t in threads:
        t.start()
    consume()
    stop.set()
    for t in threads:
        t.join()
    operator.flush()
    if errors:
        raise errors[0]
    return ReplayResult(detected, latencies, list(controller.trace or ()), operator.metrics, rate, mu,
                        time.perf_counter() - t0, 0, [e.seq for e in events])


