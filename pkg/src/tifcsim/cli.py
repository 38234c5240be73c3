"""Command-line front end.

Subcommands: validate, run, paired, leakage, check-labels. Exit codes:
0 success, 1 assertion/leakage failure, 2 configuration error, 3 denied
flow under fatal monitor mode. Seed precedence: --seed, then the
TIFC_SIM_SEED environment variable, then the config file.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path
from typing import List, Optional, Tuple

from .kernel import ConfigError, MonitorFault, TraceKind, TraceRecord
from .labels import Label, LabelParseError
from .leakage import CovertExperiment, measure
from .scenarios import (
    RecordSelector,
    ScenarioConfig,
    assert_labels,
    build_scenario,
    default_label_expectations,
    render_schedule,
    run_paired,
    run_scenario,
)

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_CONFIG = 2
EXIT_FATAL = 3


def _load_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def load_scenario(path: str, seed: Optional[int]) -> ScenarioConfig:
    obj = _load_json(path)
    if "scenario" in obj:
        # Shorthand: {"scenario": "statmux", "f": "1/5", ...}
        from .labels import Frequency
        from .monitor import MonitorMode

        cfg = build_scenario(
            obj["scenario"],
            users=tuple(obj.get("users", ("A", "B"))),
            freq=Frequency.parse(obj["f"]) if "f" in obj else None,
            horizon=obj.get("horizon", 200),
            seed=obj.get("seed", 0),
            pacer_present=obj.get("pacer", True),
            monitor_mode=MonitorMode(obj.get("monitor_mode", "record")),
        )
    else:
        cfg = ScenarioConfig.from_json_obj(obj)
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    return cfg.validate()


def _resolve_seed(args) -> Optional[int]:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("TIFC_SIM_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"bad TIFC_SIM_SEED {env!r}") from exc
    return None


def _write_trace(trace: List[TraceRecord], out: Path, fmt: str) -> Path:
    if fmt == "jsonl":
        path = out / "trace.jsonl"
        path.write_text("".join(r.to_json() + "\n" for r in trace), encoding="utf-8")
    elif fmt == "csv":
        path = out / "trace.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "kind", "entity", "label", "detail"])
            for r in trace:
                writer.writerow([
                    r.t,
                    r.kind.value,
                    r.entity,
                    str(r.label) if r.label is not None else "",
                    json.dumps(dict(r.detail), sort_keys=True),
                ])
    else:
        path = out / "trace.txt"
        lines = []
        for r in trace:
            detail = " ".join(f"{k}={v}" for k, v in sorted(r.detail.items()))
            label = str(r.label) if r.label is not None else "-"
            lines.append(f"t={r.t:<5} {r.kind.value:<13} {r.entity:<10} {label} {detail}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def cmd_validate(args) -> int:
    cfg = load_scenario(args.config, _resolve_seed(args))
    print(cfg.canonical_json())
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_scenario(args.config, _resolve_seed(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run = run_scenario(cfg)
    trace_path = _write_trace(run.trace, out, args.format)
    chart_path = out / "chart.txt"
    chart_path.write_text(render_schedule(run.trace, cfg) + "\n", encoding="utf-8")
    print(f"wrote {trace_path} and {chart_path} ({len(run.trace)} records)")
    return EXIT_OK


def cmd_paired(args) -> int:
    cfg = load_scenario(args.config, _resolve_seed(args))
    report = run_paired(cfg, args.short, args.long)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(
        json.dumps(report.to_json_obj(include_traces=True), sort_keys=True, indent=2)
        + "\n",
        encoding="utf-8",
    )
    (out / "report.txt").write_text(report.to_text() + "\n", encoding="utf-8")
    print(f"paired {report.scenario}: {'PASS' if report.passed else 'FAIL'} "
          f"({len(report.alice_diff)} boundary diffs)")
    return EXIT_OK if report.passed else EXIT_ASSERTION


def cmd_leakage(args) -> int:
    obj = _load_json(args.config)
    exp = CovertExperiment.from_json_obj(obj)
    seed = _resolve_seed(args)
    if seed is not None:
        exp = dataclasses.replace(exp, seed=seed)
    report = measure(exp)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report.csv_text(), encoding="utf-8")
    (out / "report.json").write_text(
        json.dumps(report.to_json_obj(), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    print(f"leakage: max rate {float(report.max_rate):.6g} vs bound "
          f"{float(report.bound):.6g} -> {'PASS' if report.all_pass else 'FAIL'}")
    return EXIT_OK if report.all_pass else EXIT_ASSERTION


def _load_expectations(path: str) -> List[Tuple[RecordSelector, Label]]:
    raw = _load_json(path)
    if not isinstance(raw, list):
        raise ConfigError("expectations file must be a JSON list")
    expectations = []
    for item in raw:
        try:
            selector = RecordSelector(
                kind=TraceKind(item["kind"]) if item.get("kind") else None,
                entity=item.get("entity"),
                detail=item.get("detail", {}),
                occurrence=item.get("occurrence", 0),
            )
            expectations.append((selector, Label.parse(item["label"])))
        except (KeyError, ValueError, LabelParseError) as exc:
            raise ConfigError(f"bad expectation {item!r}: {exc}") from exc
    return expectations


def cmd_check_labels(args) -> int:
    cfg = load_scenario(args.config, _resolve_seed(args))
    run = run_scenario(cfg)
    if args.expect:
        expectations = _load_expectations(args.expect)
    else:
        expectations = default_label_expectations(cfg)
        if not expectations:
            raise ConfigError("no default expectations for this topology; "
                              "pass --expect")
    checks = assert_labels(run.trace, expectations)
    for c in checks:
        status = "ok  " if c.ok else "FAIL"
        print(f"{status} {c.selector.describe()}: {c.message}"
              if not c.ok else f"{status} {c.selector.describe()} = {c.expected}")
    return EXIT_OK if all(c.ok for c in checks) else EXIT_ASSERTION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tifc-sim",
        description="Deterministic multi-tenant timing-channel simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", required=True, help="scenario config JSON")
        p.add_argument("--seed", type=int, default=None)
        if out:
            p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("validate", help="validate a config and print it canonically")
    common(p, out=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="run one scenario; write trace and chart")
    common(p)
    p.add_argument("--format", choices=("jsonl", "csv", "txt"), default="jsonl")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("paired", help="short-vs-long comparison run")
    common(p)
    p.add_argument("--short", type=int, default=2)
    p.add_argument("--long", type=int, default=7)
    p.set_defaults(func=cmd_paired)

    p = sub.add_parser("leakage", help="covert-channel rate measurement")
    common(p)
    p.set_defaults(func=cmd_leakage)

    p = sub.add_parser("check-labels", help="assert label expectations on a run")
    common(p, out=False)
    p.add_argument("--expect", default=None, help="expectations JSON file")
    p.set_defaults(func=cmd_check_labels)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, LabelParseError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MonitorFault as exc:
        print(f"fatal monitor denial: {exc}", file=sys.stderr)
        print(exc.record.to_json(), file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
