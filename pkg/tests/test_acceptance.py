"""Acceptance criteria, one test per criterion.

Each test prints one ``ACCEPTANCE <n> PASS|FAIL`` line (also repeated in the
terminal summary). Run alone with ``pytest tests/test_acceptance.py -v`` or
``python tests/test_acceptance.py``.
"""
import math
import random
import time
from fractions import Fraction

import numpy as np
import pytest

from fixtures import A, B, S0, S1, six_pm_observations, six_pm_patterns
from oracle import brute_force
from randomized import random_instance
from scenario import load_config, write_workload
from hspice.events import Event, WindowSpec
from hspice.harness.experiment import Workload, calibrate, run_experiment, train_model
from hspice.harness.replay import ReplayOverflow, oracle_run
from hspice.harness.qor import compute_qor
from hspice.operator import CEPOperator, ShedDecider
from hspice.patterns import PatternSet, PatternSpec, negated, single
from hspice.planner import (PlanCell, ShedPlan, build_threshold_array, build_virtual_window,
                            compute_drop_amount, threshold_for)
from hspice.shedders import HspiceShedder
from hspice.stats import (CompletionObservation, ContributionObservation, StatsCollector, UtilityTable,
                          build_utility_table, utility_ratios)

RESULTS: list[str] = []


def record(n: int, name: str, ok: bool, detail: str) -> None:
    line = f"ACCEPTANCE {n} {'PASS' if ok else 'FAIL'} {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def _six_pm_stats():
    c = StatsCollector()
    for ob in six_pm_observations():
        c.record(ob)
    c.window_closed(0)
    return c.snapshot()


def test_1_six_pm_reproduction():
    t0 = time.perf_counter()
    ut = build_utility_table(_six_pm_stats(), six_pm_patterns(1.0), 2, 5, bin_size=1, min_observations=1)
    expected = {(A, 0, S0): Fraction(1, 3), (A, 2, S0): Fraction(1, 4), (A, 3, S0): Fraction(0),
                (B, 3, S1): Fraction(1, 4), (B, 4, S1): Fraction(2, 5)}
    worst = 0.0
    for t in range(2):
        for p in range(5):
            for s in (S0, S1):
                want = float(expected.get((t, p, s), 0))
                worst = max(worst, abs(ut.lookup(t, p, s) - want))
    elapsed = time.perf_counter() - t0
    record(1, "six-PM utility table", worst <= 1e-9 and elapsed < 1,
           f"max |error| {worst:.1e} over all cells (tol 1e-9), {elapsed:.3f}s")


def test_2_oracle_equivalence():
    t0 = time.perf_counter()
    bad = []
    for seed in range(500):
        specs, window, events = random_instance(random.Random(50_000 + seed))
        got = {c.key for c in CEPOperator(PatternSet(specs), window).run(events)}
        if got != brute_force(events, specs, window):
            bad.append(seed)
    elapsed = time.perf_counter() - t0
    record(2, "never-drop output equals brute force", not bad and elapsed < 60,
           f"{500 - len(bad)}/500 instances set-equal, {elapsed:.1f}s; mismatching seeds {bad[:5]}")


def test_3_drop_amount_grid():
    mu = 100
    wrong = []
    for ratio in (Fraction(10, 10), Fraction(12, 10), Fraction(14, 10), Fraction(16, 10),
                  Fraction(18, 10), Fraction(2)):
        rate = mu * ratio
        for ws in (5, 18, 35):
            want = math.floor((1 - mu / rate) * ws + Fraction(1, 2))
            got = compute_drop_amount(float(rate), float(mu), ws)
            if got != want:
                wrong.append((float(ratio), ws, got, want))
    below = [compute_drop_amount(r, 100, 18) for r in (1, 50, 99.9, 100)]
    record(3, "drop amount formula", not wrong and below == [0, 0, 0, 0],
           f"18 grid cells exact, {len(wrong)} mismatches {wrong[:3]}; R<=mu gives {below}")


def test_4_threshold_calibration(tmp_path):
    cfg = load_config(write_workload(tmp_path, seed=11, length=60_000))
    model = train_model(cfg, Workload.load(cfg))
    ut, vw, arr = model.table, model.vw, model.array
    tallies = model.stats.window_tallies
    last = ut.window_size - 1
    failures = []
    checked = 0
    for rho in range(1, ut.window_size):
        rho_v = min(rho * vw.avg_occurrence, vw.size)
        u_th = threshold_for(arr, rho_v)
        shed = [sum(n for (t, p, s), n in w.items() if ut.lookup(t, min(p, last), s) <= u_th)
                for w in tallies]
        mean = sum(shed) / len(shed)
        checked += 1
        if not 0.8 * rho_v <= mean <= vw.size + 1e-9:
            failures.append((rho, round(rho_v, 2), round(mean, 2)))
    record(4, "threshold calibration band", not failures,
           f"{checked - len(failures)}/{checked} drop amounts shed within [0.8*rho_v, ws_v={vw.size:.1f}] "
           f"over {len(tallies)} training windows; outside {failures[:4]}")


@pytest.fixture(scope="module")
def latency_run(tmp_path_factory):
    cfg = load_config(write_workload(tmp_path_factory.mktemp("lat"), seed=21, length=150_000),
                      rate_pct=200.0)
    return cfg, *run_experiment(cfg)


def test_5_latency_bound(latency_run):
    cfg, report, result = latency_run
    lb = cfg.latency_bound
    lat = report.latency
    ok = lat.within_bound >= 0.99 and 0.72 * lb <= lat.mean <= 0.88 * lb
    record(5, "latency bound at 200% with hSPICE", ok,
           f"{100 * lat.within_bound:.2f}% of {lat.count} events within LB={lb}s (need >=99%), "
           f"mean {lat.mean:.3f}s (need 0.8*LB +-10%), p99 {lat.p99:.3f}s, max {lat.max:.3f}s")


def test_6_qor_ordering(tmp_path):
    rows = []
    fp_bad = []
    ok = True
    for seed in range(1, 6):
        d = tmp_path / f"s{seed}"
        d.mkdir()
        cfg = load_config(write_workload(d, seed=seed, length=100_000), rate_pct=160.0)
        work = Workload.load(cfg)
        model = train_model(cfg, work)
        mu = calibrate(cfg, work)
        truth = oracle_run(work.evaluate, work.patterns, cfg.window, cfg.pm_cap)
        fn = {}
        for kind in ("hspice", "random", "espice_lite", "bl_lite", "pspice_lite"):
            try:
                rep, _ = run_experiment(cfg.with_(shedder={"shedder": kind}), work, model, mu, truth)
            except ReplayOverflow:
                fp_bad.append((seed, kind, "overflow"))
                continue
            fn[kind] = rep.fn_total
            if rep.fp_total != 0:
                fp_bad.append((seed, kind, rep.fp_total))
        better = fn["hspice"] <= 0.8 * fn["random"] and fn["random"] > 0
        ok &= better
        rows.append(f"seed {seed}: FN hspice {fn['hspice']:.0f} vs random {fn['random']:.0f}")
    ok &= not fp_bad
    record(6, "QoR ordering at 160%", ok,
           "; ".join(rows) + f"; non-zero FP or overflow: {fp_bad or 'none'}")


class DropNegatedType(ShedDecider):
    checks_pairings = True

    def __init__(self, negated_type):
        self.negated_type = negated_type

    def drop(self, event_type, position, state):
        return event_type == self.negated_type


def test_7_negation_false_positives():
    a, b, c = 0, 1, 2
    q3 = PatternSpec.seq(3, single(a), negated(c), single(b))
    plain = PatternSpec.seq(1, a, b)
    pats = PatternSet([q3, plain])
    window = WindowSpec.count(6)
    rng = random.Random(3)
    events = [Event(i, i, t) for i, t in enumerate(rng.choice([a, b, c]) for _ in range(600))]
    truth = CEPOperator(pats, window).run(events)

    def fp(protect):
        dec = DropNegatedType(c)
        out = CEPOperator(pats, window, decider=dec, protect_negations=protect).run(events)
        rep = compute_qor(out, truth, pats.weights)
        by = {p.pattern_id: p for p in rep.patterns}
        return by[3].false_positives, by[1].false_positives, by[1].false_negatives, by[3].false_negatives

    q3_fp, plain_fp, plain_fn, q3_fn = fp(False)
    q3_fp_p, plain_fp_p, _, _ = fp(True)
    ok = q3_fp > 0 and plain_fp == 0 and plain_fn == 0 and q3_fn == 0 and q3_fp_p == 0 and plain_fp_p == 0
    record(7, "negation false positives only via negated drops", ok,
           f"dropping negated-event pairings: Q3 FP={q3_fp}, seq FP={plain_fp}; "
           f"with negated shedding disabled: Q3 FP={q3_fp_p}")


def _time_decisions(ws, types=10, states=6, calls=200_000, repeats=5):
    rng = np.random.default_rng(ws)
    cells = rng.random((types, ws, states))
    table = UtilityTable(cells, ws, 1, tuple(range(states)) + (-1,))
    sh = HspiceShedder(table, PlanCell(ShedPlan(True, ws, 1, 1.0, 0.5)))
    probes = list(zip(rng.integers(0, types, calls).tolist(), rng.integers(0, ws, calls).tolist(),
                      rng.integers(0, states, calls).tolist()))
    drop = sh.drop
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        for t, p, s in probes:
            drop(t, p, s)
        best = min(best, (time.perf_counter() - t0) / calls)
    return best


def test_8_constant_time_decision():
    times = {ws: _time_decisions(ws) for ws in (100, 1000, 10_000)}
    ratio = max(times.values()) / min(times.values())
    record(8, "O(1) shedding decision", ratio <= 2.0,
           ", ".join(f"ws={ws}: {t * 1e9:.0f}ns" for ws, t in times.items()) + f"; max/min {ratio:.2f} (<=2)")


def _random_stats(rng, pats, types, ws):
    c = StatsCollector()
    for w in range(rng.randint(1, 4)):
        pm = 0
        for _ in range(rng.randint(1, 40)):
            s = rng.choice(pats.pm_states)
            after = s + 1 if rng.random() < 0.4 else s
            c.record(ContributionObservation(pm, s, after, rng.randrange(types), rng.randrange(ws), w))
            c.record(CompletionObservation(pm, w, rng.random() < 0.5))
            pm += 1
        c.window_closed(w)
    return c.snapshot()


def test_9_monotone_structures():
    rng = random.Random(9)
    problems = []
    for i in range(1000):
        types, ws, bs = rng.randint(1, 4), rng.randint(1, 12), rng.randint(1, 3)
        pats = PatternSet([PatternSpec.seq(1, *[rng.randrange(types) for _ in range(rng.randint(1, 3))]),
                           PatternSpec.seq(2, rng.randrange(types), weight=rng.choice([0.5, 1, 3]))])
        st = _random_stats(rng, pats, types, ws)
        num, den = utility_ratios(st, pats, types, ws, bs)
        if (num > den).any():
            problems.append((i, "numerator > denominator"))
        ratio = np.where(den > 0, num / np.where(den > 0, den, 1), 0.0)
        if ratio.min() < 0 or ratio.max() > 1:
            problems.append((i, "unweighted utility outside [0,1]"))
        ut = build_utility_table(st, pats, types, ws, bs, min_observations=1)
        arr = build_threshold_array(build_virtual_window(st.window_tallies, ws), ut)
        vals = list(arr.values)
        if vals != sorted(vals):
            problems.append((i, "threshold array decreasing"))
        ths = [threshold_for(arr, x / 4) for x in range(0, 4 * len(vals) + 8)]
        if ths != sorted(ths):
            problems.append((i, "threshold_for not monotone"))
    record(9, "monotone structures", not problems,
           f"1000 random tables; problems {problems[:3] or 'none'}")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q"]))
