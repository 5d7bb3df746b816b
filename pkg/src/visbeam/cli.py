"""Command line entry point: ``visbeam run | validate | gen-scenarios | report``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import yaml

from . import suites as bundled
from .harness import ConfigError, emit_report, load_report, parse_config, run_experiment
from .scene import save_scenario

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SCENARIO = 2
OUT_ENV = "VISBEAM_OUT"

log = logging.getLogger("visbeam")


def _int_list(text: str):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="visbeam", description=__doc__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    def run_flags(p):
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--seed", type=int)
        p.add_argument("--scenarios", dest="scenario_glob", metavar="GLOB", help="only scenarios whose name matches")
        p.add_argument("--S-max", dest="S_max", type=int, choices=(1, 2, 3))
        p.add_argument("--topn", type=_int_list, metavar="LIST")
        p.add_argument("--m-frames", dest="m_frames", type=_int_list, metavar="LIST")
        p.add_argument("--iou-threshold", dest="iou_threshold", type=float, metavar="Z")
        p.add_argument("--workers", type=int)

    p = sub.add_parser("run", help="run the pipeline over the configured scenarios and write a report")
    run_flags(p)
    p.add_argument("--out", type=Path, help=f"output directory (overrides ${OUT_ENV} and the config)")

    p = sub.add_parser("validate", help="check a run config and its scenarios")
    run_flags(p)

    p = sub.add_parser("gen-scenarios", help="write the bundled scenario suites as YAML")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--suite", action="append", choices=sorted(bundled.SUITE_BUILDERS))

    p = sub.add_parser("report", help="re-render tables from a saved report.json")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out", type=Path)
    return ap


def _overrides(args) -> dict:
    keys = ("seed", "scenario_glob", "S_max", "topn", "m_frames", "iou_threshold", "workers")
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def _out_dir(args, cfg) -> Path:
    if getattr(args, "out", None) is not None:
        return args.out
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV])
    return Path(cfg.out)


def cmd_run(args) -> int:
    try:
        cfg = parse_config(args.config, _overrides(args))
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_CONFIG
    out = _out_dir(args, cfg)
    report = run_experiment(cfg)
    try:
        emit_report(report, out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    print(f"{len(report.scenarios)} scenario(s) ok, {len(report.failures)} failed; report in {out}")
    for name, err in sorted(report.failures.items()):
        print(f"scenario {name} failed: {err}", file=sys.stderr)
    return EXIT_SCENARIO if report.failures else EXIT_OK


def cmd_validate(args) -> int:
    try:
        cfg = parse_config(args.config, _overrides(args))
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"ok: {len(cfg.scenario_paths)} scenario file(s), suites {cfg.suites or '-'}")
    return EXIT_OK


def cmd_gen(args) -> int:
    names = args.suite or sorted(bundled.SUITE_BUILDERS)
    out = args.out
    paths = []
    for name in names:
        for sc in bundled.SUITE_BUILDERS[name]():
            path = out / name / f"{sc.name}.yaml"
            path.parent.mkdir(parents=True, exist_ok=True)
            save_scenario(sc, path)
            paths.append(path.relative_to(out).as_posix())
    config = {"scenarios": paths, "seed": 0, "out": "results"}
    (out / "run.yaml").write_text(yaml.safe_dump(config, sort_keys=False))
    print(f"wrote {len(paths)} scenario(s) and run.yaml to {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        report = load_report(args.input)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: cannot load {args.input}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or args.input.parent
    emit_report(report, out)
    print(f"tables written to {out}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": cmd_run, "validate": cmd_validate, "gen-scenarios": cmd_gen, "report": cmd_report}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
