"""Command line: generate, calibrate, train, run, sweep, report.

Results go to stdout as JSON; failures go to stderr as
``{"error": ..., "message": ...}``. Usage and configuration errors exit
with 2, any other failure with 1.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .events import StreamError, StreamSchema
from .model import ShedModel
from .operator import dump_complex_events
from .patterns import PatternError
from .planner import PlanConfigError
from .shedders import SHEDDER_KINDS, ShedderConfigError
from .stats import NotReady
from .harness.config import ConfigError, ExperimentConfig
from .harness.experiment import Workload, calibrate, run_experiment, sweep, train_model
from .harness.generator import GenerationError, StreamProfile, write_generated
from .harness.qor import QoRReport, report_rows, write_csv
from .harness.replay import ReplayOverflow

USAGE_ERRORS = (ConfigError, ShedderConfigError, PlanConfigError, PatternError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _csv_list(text: str, kind=str) -> list:
    try:
        return [kind(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad list {text!r}: {exc}") from None


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, default=str)
    sys.stdout.write("\n")


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    changes = {}
    if getattr(args, "rate", None) is not None:
        changes["rate_pct"] = args.rate
    if getattr(args, "shedder", None) is not None:
        changes["shedder"] = {"shedder": args.shedder}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    return cfg.with_(**changes) if changes else cfg


def cmd_generate(args) -> None:
    profile = StreamProfile.load(args.profile)
    n, planted = write_generated(profile, args.out)
    if args.schema:
        StreamSchema(profile.type_count).save(args.schema)
    _emit({"events": n, "planted": planted, "stream": args.out})


def cmd_calibrate(args) -> None:
    cfg = _load_config(args)
    _emit({"mu": calibrate(cfg, Workload.load(cfg)), "clock": cfg.clock})


def cmd_train(args) -> None:
    cfg = _load_config(args)
    model = train_model(cfg, Workload.load(cfg))
    model.save(args.out)
    _emit({"model": args.out, "samples": model.table.samples, "ws_v": model.vw.size,
           "avg_O": model.vw.avg_occurrence, "threshold_len": len(model.array)})


def cmd_run(args) -> None:
    cfg = _load_config(args)
    model = ShedModel.load(args.model) if args.model else None
    report, result = run_experiment(cfg, model=model)
    if args.out:
        report.save(args.out)
    if args.trace:
        with open(args.trace, "w") as fh:
            for plan in result.plans:
                fh.write(json.dumps(plan.to_json()) + "\n")
    if args.latency:
        with open(args.latency, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seq", "latency"])
            w.writerows(result.latency_samples())
    if args.detected:
        dump_complex_events(args.detected, result.detected)
    _emit(report.to_json())


def cmd_sweep(args) -> None:
    cfg = _load_config(args)
    rates = _csv_list(args.rates, float) if args.rates else []
    kinds = _csv_list(args.shedders) if args.shedders else []
    for k in kinds:
        if k not in SHEDDER_KINDS:
            raise UsageError(f"unknown shedder {k!r}")
    sizes = _csv_list(args.window_sizes, int) if args.window_sizes else []
    reports = sweep(cfg, rates, kinds, sizes)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for r in reports:
        c = r.config
        path = out / f"report_{c['shedder']}_r{c['rate_pct']:g}_ws{c['window_size']}.json"
        r.save(path)
        paths.append(str(path))
    _emit({"reports": paths, "summary": report_rows(reports)})


def cmd_report(args) -> None:
    files = []
    for p in args.reports:
        p = Path(p)
        files.extend(sorted(p.glob("*.json")) if p.is_dir() else [p])
    if not files:
        raise UsageError("no report files given")
    reports = [QoRReport.load(f) for f in files]
    reports.sort(key=lambda r: (str(r.config.get("shedder")), r.config.get("window_size") or 0,
                                r.config.get("rate_pct") or 0))
    n = write_csv(args.csv, reports)
    if args.plot_data:
        series: dict = {}
        for row in report_rows(reports):
            s = series.setdefault(row["shedder"], {"rate_pct": [], "fn_pct": [], "fp_pct": [],
                                                   "drop_ratio": [], "latency_mean": []})
            for k in s:
                s[k].append(row[k])
        Path(args.plot_data).write_text(json.dumps(series, indent=2) + "\n")
    _emit({"csv": args.csv, "rows": n})


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hspice", description="State-aware load shedding for a CEP operator.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="synthetic stream from a profile")
    g.add_argument("--profile", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--schema", help="also write a stream schema file")
    g.set_defaults(fn=cmd_generate)

    def experiment(name, help_text, fn):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--config", required=True, help="experiment JSON")
        s.add_argument("--seed", type=int)
        s.set_defaults(fn=fn)
        return s

    experiment("calibrate", "measure the operator's service rate", cmd_calibrate)
    t = experiment("train", "build utility table and thresholds from the training prefix", cmd_train)
    t.add_argument("--out", required=True)

    r = experiment("run", "replay one experiment", cmd_run)
    r.add_argument("--model", help="trained model from `train`")
    r.add_argument("--rate", type=float, help="input rate in percent of mu")
    r.add_argument("--shedder", choices=SHEDDER_KINDS)
    r.add_argument("--out", help="QoR report JSON")
    r.add_argument("--trace", help="plan trace, JSON lines")
    r.add_argument("--latency", help="latency samples CSV")
    r.add_argument("--detected", help="detected complex events, JSON lines")

    s = experiment("sweep", "grid over rates, shedders and window sizes", cmd_sweep)
    s.add_argument("--rates", help="comma-separated percentages of mu")
    s.add_argument("--shedders", help="comma-separated shedder kinds")
    s.add_argument("--window-sizes", help="comma-separated window sizes")
    s.add_argument("--out-dir", required=True)

    rep = sub.add_parser("report", help="merge reports into CSV")
    rep.add_argument("reports", nargs="+", help="report files or directories")
    rep.add_argument("--csv", required=True)
    rep.add_argument("--plot-data", help="per-shedder series as JSON")
    rep.set_defaults(fn=cmd_report)
    return p


def _fail(kind: str, message: str, code: int) -> int:
    json.dump({"error": kind, "message": message}, sys.stderr)
    sys.stderr.write("\n")
    return code


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.fn(args)
    except UsageError as exc:
        return _fail("usage", str(exc), 2)
    except USAGE_ERRORS as exc:
        return _fail("config", str(exc), 2)
    except (GenerationError, StreamError, NotReady, ReplayOverflow, OSError, ValueError) as exc:
        return _fail(type(exc).__name__, str(exc), 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
