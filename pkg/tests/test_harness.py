import json
import math

import pytest

from conftest import make_stream
from oracle import brute_force
from scenario import load_config, write_workload
from hspice.events import WindowSpec, read_stream
from hspice.harness import (
    ConfigError, CostModel, ExperimentConfig, GenerationError, Plant, QoRReport, ReplayOverflow,
    StreamProfile, compute_qor, generate_stream, oracle_run, run_experiment, write_generated)
from hspice.harness.experiment import Workload, sweep
from hspice.harness.generator import sidecar_path
from hspice.harness.qor import LatencySummary, write_csv
from hspice.harness.replay import replay_virtual
from hspice.operator import CEPOperator, ComplexEvent
from hspice.patterns import PatternSet, PatternSpec, negated
from hspice.planner import OverloadController, PlanCell, ThresholdArray, VirtualWindow


def test_generate_empty(tmp_path):
    assert write_generated(StreamProfile(3, 0), tmp_path / "s.jsonl") == (0, 0)
    assert (tmp_path / "s.jsonl").read_text() == ""
    assert json.loads(sidecar_path(tmp_path / "s.jsonl").read_text())["planted"] == []


def test_generate_deterministic(tmp_path):
    prof = StreamProfile(4, 500, 10, (Plant(1, (0, 1), (1, 5), 20),), seed=9)
    write_generated(prof, tmp_path / "a.jsonl")
    write_generated(prof, tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    assert sidecar_path(tmp_path / "a.jsonl").read_bytes() == sidecar_path(tmp_path / "b.jsonl").read_bytes()


def test_planted_occurrences_detected():
    prof = StreamProfile(3, 400, 10, (Plant(1, (0, 1), (2, 6), 10),), noise_types=(2,), seed=1)
    events, planted = generate_stream(prof)
    assert len(planted) == 10
    truth = oracle_run(events, PatternSet([PatternSpec.seq(1, 0, 1)]), WindowSpec.count(10))
    assert len(truth) >= 10
    for row in planted:
        assert events[row["seqs"][0]].event_type == 0 and events[row["seqs"][1]].event_type == 1


def test_generator_attributes():
    events, _ = generate_stream(StreamProfile(2, 50, seed=3))
    last = {}
    for e in events:
        assert set(e.attributes) == {"price", "pct_change"}
        prev = last.get(e.event_type, 100.0)
        assert e.attributes["pct_change"] == pytest.approx(100 * (e.attributes["price"] - prev) / prev, abs=1e-3)
        last[e.event_type] = e.attributes["price"]


@pytest.mark.parametrize("prof", [
    StreamProfile(3, 100, 10, (Plant(1, (0, 1), (1, 5), 11),)),
    StreamProfile(3, 100, 10, (Plant(1, (0, 1), (5, 1), 1),)),
    StreamProfile(3, 100, 10, (Plant(1, (0, 1), (1, 10), 1),)),
    StreamProfile(3, 100, 10, (Plant(1, (0, 7), (1, 2), 1),)),
    StreamProfile(3, 100, 10, noise_types=()),
])
def test_generator_rejects_impossible(prof):
    with pytest.raises(GenerationError):
        generate_stream(prof)


def test_oracle_run_matches_brute_force():
    types = [0, 1, 0, 2, 1, 2, 2, 0, 1, 2, 0, 1, 2]
    events = make_stream(types)
    spec = PatternSpec.seq(1, 0, 1, 2)
    window = WindowSpec.count(7, 2)
    got = {c.key for c in oracle_run(events, PatternSet([spec]), window)}
    assert got == brute_force(events, [spec], window)


def test_oracle_missing_type_and_forced_negation():
    events = make_stream([0, 2, 1, 0, 2, 1])
    assert oracle_run(events, PatternSet([PatternSpec.seq(1, 0, 3)]), WindowSpec.count(6)) == []
    neg = PatternSpec.seq(1, 0, negated(2), 1)
    assert oracle_run(events, PatternSet([neg]), WindowSpec.count(6)) == []


def _ce(p, w, seqs):
    return ComplexEvent(p, w, tuple(seqs))


def test_qor_identity():
    t = [_ce(1, 0, [1, 2]), _ce(2, 0, [3])]
    r = compute_qor(t, t, {1: 1.0, 2: 2.0})
    assert r.fp_total == r.fn_total == 0


def test_qor_weighted_sums():
    truth = [_ce(1, 0, [i]) for i in range(5)] + [_ce(2, 0, [i]) for i in range(4)]
    detected = [_ce(1, 0, [i]) for i in range(2)] + [_ce(2, 0, [i]) for i in range(2)] + [_ce(2, 1, [9])]
    r = compute_qor(detected, truth, {1: 1.0, 2: 2.0})
    by = {p.pattern_id: p for p in r.patterns}
    assert by[1].false_negatives == 3 and by[2].false_negatives == 2
    assert r.fn_total == 7 and r.fp_total == 2
    assert by[1].fn_pct == 60 and r.fn_pct == pytest.approx(100 * 7 / 13)


def test_qor_report_roundtrip(tmp_path):
    r = compute_qor([_ce(1, 0, [1])], [_ce(1, 0, [1]), _ce(1, 0, [2])], {1: 1.0}, 0.25,
                    [0.1, 0.2, 1.5], 1.0, {"shedder": "random", "rate_pct": 150})
    r.save(tmp_path / "r.json")
    back = QoRReport.load(tmp_path / "r.json")
    assert back.fn_total == 1 and back.latency == r.latency and back.config == r.config
    assert write_csv(tmp_path / "r.csv", [r, back]) == 2


def test_latency_summary():
    s = LatencySummary.of([float(i) for i in range(1, 101)], bound=99)
    assert s.mean == 50.5 and s.p99 == 99 and s.max == 100 and s.within_bound == 0.99


def _replay(events, pats, window, rate, mu, costs, cap=10_000):
    cell = PlanCell()
    ctl = OverloadController(10, VirtualWindow({}, 10), ThresholdArray(()), cell=cell, trace=[])
    op = CEPOperator(pats, window)
    return replay_virtual(events, op, ctl, rate, mu, costs, cap, 0.1)


def test_virtual_replay_underload_latency_is_service_time():
    events = make_stream([0, 1] * 50)
    pats = PatternSet([PatternSpec.seq(1, 0, 1)])
    costs = CostModel(event=1e-3, window=0, step=0, decision=0)
    res = _replay(events, pats, WindowSpec.count(10), rate=100, mu=1000, costs=costs)
    assert all(math.isclose(x, 1e-3) for x in res.latencies)
    assert res.max_queue == 0


def test_virtual_replay_overflow():
    events = make_stream([0] * 200)
    pats = PatternSet([PatternSpec.seq(1, 0, 1)])
    costs = CostModel(event=1e-2, window=0, step=0, decision=0)
    with pytest.raises(ReplayOverflow, match="queue holds"):
        _replay(events, pats, WindowSpec.count(10), rate=1000, mu=100, costs=costs, cap=20)


def test_config_errors(tmp_path):
    base = {"stream": "s", "patterns": "p", "window": {"size": 5}, "type_count": 2}
    with pytest.raises(ConfigError, match="unknown"):
        ExperimentConfig.from_json({**base, "bogus": 1})
    with pytest.raises(ConfigError, match="missing"):
        ExperimentConfig.from_json({"stream": "s"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json({**base, "shedder": {"shedder": "magic"}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json({**base, "window": {"size": 5, "slide": 9}})
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "absent.json")
    cfg = ExperimentConfig.from_json(base, tmp_path)
    assert cfg.stream == str(tmp_path / "s") and cfg.latency_bound == 1.0 and cfg.safety_fraction == 0.8


@pytest.fixture(scope="module")
def small(tmp_path_factory):
    d = tmp_path_factory.mktemp("small")
    return write_workload(d, seed=4, length=30_000, latency_bound=0.2)


def test_underload_no_drops(small):
    report, res = run_experiment(load_config(small, rate_pct=50))
    assert report.drop_ratio == 0 and report.fn_total == 0 and report.fp_total == 0
    assert report.truth > 0 and not any(p.overloaded for p in res.plans)


def test_random_drop_ratio_tracks_plan(small):
    report, res = run_experiment(load_config(small, rate_pct=200, shedder={"shedder": "random"}))
    expected = [p.rho / 20 for p in res.plans if p.overloaded]
    assert expected and report.drop_ratio > 0
    assert report.fp_total == 0


def test_virtual_runs_reproducible(small):
    cfg = load_config(small, rate_pct=180)
    a, ra = run_experiment(cfg)
    b, rb = run_experiment(cfg)
    assert a.to_json() == b.to_json()
    assert ra.latencies == rb.latencies and [p.to_json() for p in ra.plans] == [p.to_json() for p in rb.plans]


def test_drop_ratio_is_dropped_over_offered(small):
    report, res = run_experiment(load_config(small, rate_pct=180))
    m = res.metrics
    assert report.drop_ratio == pytest.approx(1 - (m.pairings - m.pairings_dropped) / m.pairings)


def test_sweep_cells(small):
    reports = sweep(load_config(small), rates=[120, 200], shedders=["hspice", "random"])
    assert [(r.config["shedder"], r.config["rate_pct"]) for r in reports] == [
        ("hspice", 120), ("hspice", 200), ("random", 120), ("random", 200)]


def test_sweep_records_overflow(small):
    cfg = load_config(small, queue_capacity=5)
    (r,) = sweep(cfg, rates=[300], shedders=["none"])
    assert "error" in r.config and math.isnan(r.fn_total)


def test_real_clock_smoke(tmp_path):
    path = write_workload(tmp_path, seed=2, length=3_000, clock="real", latency_bound=0.5)
    report, res = run_experiment(load_config(path, rate_pct=50, shedder={"shedder": "none"}))
    work = Workload.load(load_config(path))
    assert len(res.latencies) == len(work.evaluate)
    assert report.fp_total == 0 and report.fn_total == 0
