"""Command line entry point: ``vbqc-netsim run|validate|suite``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import harness

EXIT_OK, EXIT_INVALID, EXIT_FAULT = 0, 2, 3


def _load(path: str):
    try:
        cfg = harness.load_config(path)
    except harness.ConfigError as exc:
        return None, exc.violations
    except OSError as exc:
        return None, [f"{path}: {exc.strerror or exc}"]
    return cfg, harness.validate(cfg)


def _report_violations(violations) -> int:
    for v in violations:
        print(f"invalid: {v}", file=sys.stderr)
    return EXIT_INVALID


def cmd_validate(args) -> int:
    cfg, bad = _load(args.config)
    if bad:
        return _report_violations(bad)
    print(f"ok: {cfg.name}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg, bad = _load(args.config)
    if bad:
        return _report_violations(bad)
    if args.trials is not None:
        cfg.trials = args.trials
    if args.seed is not None:
        cfg.seed = args.seed
    bad = harness.validate(cfg)
    if bad:
        return _report_violations(bad)
    try:
        reports = harness.run_trials(cfg, args.workers, keep_log=bool(args.log_channel))
        report = harness.aggregate(cfg, reports)
        text = harness.render(report, args.format)
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
        if args.log_channel:
            Path(args.log_channel).write_text(harness.channel_log(reports))
    except harness.TrialFault as exc:
        print(f"fault: {exc}", file=sys.stderr)
        return EXIT_FAULT
    except OSError as exc:
        print(f"fault: {exc}", file=sys.stderr)
        return EXIT_FAULT
    return EXIT_OK


def cmd_suite(args) -> int:
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    for cfg in harness.suite_configs():
        try:
            report = harness.run_scenario(cfg, args.workers)
        except harness.ConfigError as exc:
            _report_violations(exc.violations)
            return EXIT_INVALID
        except harness.TrialFault as exc:
            print(f"fault in {cfg.name}: {exc}", file=sys.stderr)
            return EXIT_FAULT
        if out_dir:
            harness.emit(report, "json", out_dir / f"{cfg.name}.json")
        checked = [m for m in report.metrics if m.passed is not None]
        ok = sum(m.passed for m in checked)
        print(f"{cfg.name:28s} trials={report.trials:<5d} checks {ok}/{len(checked)} passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vbqc-netsim", description="Multi-party verifiable blind computation simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario")
    run.add_argument("--config", required=True)
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.add_argument("--format", choices=("json", "csv"), default="json")
    run.add_argument("--log-channel", metavar="PATH", help="write every channel event as JSONL")
    run.add_argument("--workers", type=int, default=1)
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("--config", required=True)
    val.set_defaults(func=cmd_validate)

    suite = sub.add_parser("suite", help="run the bundled scenarios")
    suite.add_argument("--out-dir", help="write one JSON report per scenario here")
    suite.add_argument("--workers", type=int, default=1)
    suite.set_defaults(func=cmd_suite)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
