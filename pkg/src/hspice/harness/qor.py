"""Quality of results: weighted false positives and false negatives."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from ..operator import ComplexEvent


@dataclass
class PatternQoR:
    pattern_id: int
    weight: float
    truth: int
    detected: int
    false_positives: int
    false_negatives: int

    @property
    def fn_pct(self) -> float:
        return 100.0 * self.false_negatives / self.truth if self.truth else 0.0

    @property
    def fp_pct(self) -> float:
        return 100.0 * self.false_positives / self.truth if self.truth else 0.0


@dataclass
class LatencySummary:
    count: int = 0
    mean: float = 0.0
    p99: float = 0.0
    max: float = 0.0
    within_bound: float = 1.0  # share of samples at or below the latency bound

    @classmethod
    def of(cls, values: Sequence[float], bound: float | None = None) -> "LatencySummary":
        if not len(values):
            return cls()
        xs = sorted(values)
        p99 = xs[min(len(xs) - 1, math.ceil(0.99 * len(xs)) - 1)]
        within = sum(1 for v in xs if v <= bound) / len(xs) if bound is not None else 1.0
        return cls(len(xs), math.fsum(xs) / len(xs), p99, xs[-1], within)


@dataclass
class QoRReport:
    patterns: list[PatternQoR]
    fp_total: float
    fn_total: float
    fp_pct: float
    fn_pct: float
    drop_ratio: float = 0.0
    latency: LatencySummary = field(default_factory=LatencySummary)
    config: dict = field(default_factory=dict)

    @property
    def detected(self) -> int:
        return sum(p.detected for p in self.patterns)

    @property
    def truth(self) -> int:
        return sum(p.truth for p in self.patterns)

    def to_json(self) -> dict:
        obj = asdict(self)
        for row, p in zip(obj["patterns"], self.patterns):
            row["fn_pct"], row["fp_pct"] = p.fn_pct, p.fp_pct
        obj["detected"], obj["truth"] = self.detected, self.truth
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "QoRReport":
        pats = [PatternQoR(int(p["pattern_id"]), float(p["weight"]), int(p["truth"]), int(p["detected"]),
                           int(p["false_positives"]), int(p["false_negatives"])) for p in obj["patterns"]]
        return cls(pats, float(obj["fp_total"]), float(obj["fn_total"]), float(obj["fp_pct"]),
                   float(obj["fn_pct"]), float(obj.get("drop_ratio", 0.0)),
                   LatencySummary(**obj.get("latency", {})), dict(obj.get("config", {})))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "QoRReport":
        return cls.from_json(json.loads(Path(path).read_text()))


def compute_qor(detected: Iterable[ComplexEvent], truth: Iterable[ComplexEvent],
                weights: Mapping[int, float], drop_ratio: float = 0.0,
                latencies: Sequence[float] = (), latency_bound: float | None = None,
                config: dict | None = None) -> QoRReport:
    """Compare detections with the no-shedding truth, keyed by (pattern, window, seqs)."""
    det = {c.key for c in detected}
    tru = {c.key for c in truth}
    ids = sorted(set(weights) | {k[0] for k in det | tru})
    rows = []
    for q in ids:
        d = {k for k in det if k[0] == q}
        t = {k for k in tru if k[0] == q}
        rows.append(PatternQoR(q, float(weights.get(q, 1.0)), len(t), len(d), len(d - t), len(t - d)))
    fp = math.fsum(r.weight * r.false_positives for r in rows)
    fn = math.fsum(r.weight * r.false_negatives for r in rows)
    base = math.fsum(r.weight * r.truth for r in rows)
    pct = (lambda x: 100.0 * x / base) if base else (lambda x: 0.0)
    return QoRReport(rows, fp, fn, pct(fp), pct(fn), drop_ratio,
                     LatencySummary.of(latencies, latency_bound), dict(config or {}))


CSV_FIELDS = ("rate_pct", "shedder", "window_size", "seed", "fp_total", "fn_total", "fp_pct", "fn_pct",
              "drop_ratio", "latency_mean", "latency_p99", "latency_max", "within_bound",
              "detected", "truth")


def report_rows(reports: Iterable[QoRReport]) -> list[dict]:
    rows = []
    for r in reports:
        c = r.config
        rows.append({"rate_pct": c.get("rate_pct"), "shedder": c.get("shedder"),
                     "window_size": c.get("window_size"), "seed": c.get("seed"),
                     "fp_total": r.fp_total, "fn_total": r.fn_total, "fp_pct": r.fp_pct,
                     "fn_pct": r.fn_pct, "drop_ratio": r.drop_ratio, "latency_mean": r.latency.mean,
                     "latency_p99": r.latency.p99, "latency_max": r.latency.max,
                     "within_bound": r.latency.within_bound, "detected": r.detected, "truth": r.truth})
    return rows


def write_csv(path: str | Path, reports: Iterable[QoRReport]) -> int:
    rows = report_rows(reports)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, CSV_FIELDS)
        w.writeheader()
        w.writerows(rows)
    return len(rows)
