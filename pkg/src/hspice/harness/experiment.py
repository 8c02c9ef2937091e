"""One experiment: train on a prefix, calibrate, replay the rest, score it."""
from __future__ import annotations

import math
from dataclasses import dataclass

from ..events import Event, read_stream
from ..model import ShedModel, position_limit, train
from ..operator import CEPOperator
from ..patterns import PatternSet
from ..planner import ControlConfig, OverloadController, PlanCell, ThresholdArray, VirtualWindow
from ..shedders import make_shedder
from .config import ExperimentConfig
from .qor import LatencySummary, QoRReport, compute_qor
from .replay import ReplayOverflow, ReplayResult, calibrate_real, calibrate_virtual, oracle_run, replay_real, replay_virtual

NEEDS_MODEL = ("hspice", "espice_lite", "bl_lite", "pspice_lite")


@dataclass
class Workload:
    patterns: PatternSet
    train: list[Event]
    evaluate: list[Event]

    @classmethod
    def load(cls, cfg: ExperimentConfig) -> "Workload":
        events = list(read_stream(cfg.stream))
        cut = int(len(events) * cfg.train_fraction)
        return cls(PatternSet.load(cfg.patterns), events[:cut], events[cut:])


def calibrate(cfg: ExperimentConfig, work: Workload) -> float:
    if cfg.mu is not None:
        return cfg.mu
    if cfg.clock == "real":
        return calibrate_real(work.train, work.patterns, cfg.window, cfg.pm_cap)
    return calibrate_virtual(work.train, work.patterns, cfg.window, cfg.costs, cfg.pm_cap)


def train_model(cfg: ExperimentConfig, work: Workload) -> ShedModel:
    return train(work.train, work.patterns, cfg.window, cfg.type_count, cfg.bin_size,
                 cfg.min_observations, cfg.positions)


def warmup_events(cfg: ExperimentConfig) -> int:
    """Events excluded from latency summaries: two drop intervals."""
    return 2 * position_limit(cfg.window, cfg.positions)


def run_experiment(cfg: ExperimentConfig, work: Workload | None = None, model: ShedModel | None = None,
                   mu: float | None = None, truth=None) -> tuple[QoRReport, ReplayResult]:
    work = work or Workload.load(cfg)
    ws = position_limit(cfg.window, cfg.positions)
    if model is None and cfg.shedder_kind in NEEDS_MODEL:
        model = train_model(cfg, work)
    mu = mu if mu is not None else calibrate(cfg, work)
    rate = mu * cfg.rate_pct / 100.0
    if truth is None:
        truth = oracle_run(work.evaluate, work.patterns, cfg.window, cfg.pm_cap)

    cell = PlanCell()
    shedder = make_shedder(cfg.shedder, cell, model, work.patterns, cfg.type_count, cfg.seed, ws)
    vw = model.vw if model is not None else VirtualWindow({}, ws)
    array = model.array if model is not None else ThresholdArray(())
    control = ControlConfig(cfg.latency_bound, cfg.safety_fraction, cfg.tick_interval, cfg.half_life)
    controller = OverloadController(ws, vw, array, control, cell, trace=[])
    op = CEPOperator(work.patterns, cfg.window, decider=shedder, pm_cap=cfg.pm_cap,
                     protect_negations=cfg.protect_negations)
    capacity = cfg.queue_capacity or max(4 * ws, math.ceil(4 * cfg.latency_bound * rate))
    if cfg.clock == "real":
        result = replay_real(work.evaluate, op, controller, rate, mu, capacity, cfg.tick_interval)
    else:
        result = replay_virtual(work.evaluate, op, controller, rate, mu, cfg.costs, capacity,
                                cfg.tick_interval)
    echo = {"rate_pct": cfg.rate_pct, "shedder": cfg.shedder_kind, "window_size": ws, "seed": cfg.seed,
            "clock": cfg.clock, "mu": mu, "rate": rate, "latency_bound": cfg.latency_bound,
            "events": len(work.evaluate)}
    report = compute_qor(result.detected, truth, work.patterns.weights,
                         op.metrics.drop_ratio(shedder.level),
                         result.latencies[warmup_events(cfg):], cfg.latency_bound, echo)
    return report, result


def sweep(cfg: ExperimentConfig, rates=(), shedders=(), window_sizes=()) -> list[QoRReport]:
    """Grid over rate, shedder kind and (count) window size; one report per cell."""
    rates = list(rates) or [cfg.rate_pct]
    kinds = list(shedders) or [cfg.shedder_kind]
    sizes = list(window_sizes) or [None]
    reports = []
    base = Workload.load(cfg)
    for size in sizes:
        c = cfg if size is None else cfg.with_(
            window=type(cfg.window)(cfg.window.kind, size, min(cfg.window.slide, size)))
        model = None
        if any(k in NEEDS_MODEL for k in kinds):
            model = train_model(c, base)
        mu = calibrate(c, base)
        truth = oracle_run(base.evaluate, base.patterns, c.window, c.pm_cap)
        for kind in kinds:
            for r in rates:
                shed = dict(c.shedder) if kind == c.shedder_kind else {"shedder": kind}
                run = c.with_(rate_pct=float(r), shedder=shed)
                try:
                    reports.append(run_experiment(run, base, model, mu, truth)[0])
                except ReplayOverflow as exc:
                    reports.append(_overflowed(run, mu, str(exc)))
    return reports


def _overflowed(cfg: ExperimentConfig, mu: float, message: str) -> QoRReport:
    """Placeholder for a grid cell whose queue blew its cap: no QoR, unbounded latency."""
    nan, inf = float("nan"), float("inf")
    echo = {"rate_pct": cfg.rate_pct, "shedder": cfg.shedder_kind,
            "window_size": position_limit(cfg.window, cfg.positions), "seed": cfg.seed,
            "mu": mu, "error": message}
    return QoRReport([], nan, nan, nan, nan, nan, LatencySummary(0, inf, inf, inf, 0.0), echo)
