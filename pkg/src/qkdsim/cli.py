"""Command-line harness: ``qkdsim run | replay | validate``.

Exit status: 0 key established, 2 aborted (any trial), 1 usage or config error.
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

from .config import FORMATS, ConfigError, ExperimentConfig, ReplayConfig, read_mapping
from .experiment import EXIT_ABORTED, EXIT_ESTABLISHED, EXIT_USAGE, replay, run_experiment
from .report import emit_replay, emit_report, write_output


class _Parser(argparse.ArgumentParser):
    # usage errors share the config-error status instead of argparse's 2,
    # which is reserved for aborted sessions
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qkdsim", description="Seeded Monte-Carlo simulator for QKD protocols.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run batch trials from an experiment config")
    run.add_argument("--config", required=True, metavar="PATH", help="YAML or JSON experiment config")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--trials", type=int, help="override the number of trials")
    run.add_argument("--workers", type=int, help="parallel worker processes")
    run.add_argument("--format", choices=FORMATS, help="report format (default from config)")
    run.add_argument("--out", metavar="PATH", help="write the report here instead of stdout")
    run.add_argument("--figures", metavar="DIR", help="also render figures into DIR")

    rep = sub.add_parser("replay", help="replay an explicit BB84 transcript")
    rep.add_argument("--config", required=True, metavar="PATH", help="YAML or JSON replay file")
    rep.add_argument("--seed", type=int, help="override the replay seed")
    rep.add_argument("--format", choices=FORMATS, help="transcript format (default from file)")
    rep.add_argument("--out", metavar="PATH")
    rep.add_argument("--figures", metavar="DIR")

    val = sub.add_parser("validate", help="check a config and print its normalized form")
    val.add_argument("--config", required=True, metavar="PATH")
    return parser


def _is_replay(data) -> bool:
    return isinstance(data, dict) and "alice_bits" in data


def _cmd_run(args) -> int:
    config = ExperimentConfig.from_dict(read_mapping(args.config))
    config = config.with_overrides(seed=args.seed, trials=args.trials, workers=args.workers, format=args.format)
    report = run_experiment(config, keep_records=args.figures is not None)
    write_output(emit_report(report, config.format), args.out)
    if args.figures is not None:
        from .plotting import render_run_figures

        render_run_figures(report, args.figures)
    return report.exit_code


def _cmd_replay(args) -> int:
    config = ReplayConfig.from_dict(read_mapping(args.config))
    if args.seed is not None and args.seed < 0:
        raise ConfigError("seed", "must be >= 0")
    config = config.with_overrides(seed=args.seed, format=args.format)
    record = replay(config)
    write_output(emit_replay(record, config.format), args.out)
    if args.figures is not None:
        from .plotting import render_replay_figure

        render_replay_figure(record, args.figures)
    return EXIT_ESTABLISHED if record.stats["decision"] == "continue" else EXIT_ABORTED


def _cmd_validate(args) -> int:
    data = read_mapping(args.config)
    config = ReplayConfig.from_dict(data) if _is_replay(data) else ExperimentConfig.from_dict(data)
    kind = "replay" if _is_replay(data) else "experiment"
    sys.stdout.write(f"valid {kind} config\n{json.dumps(config.to_dict(), indent=2)}\n")
    return EXIT_ESTABLISHED


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "replay": _cmd_replay, "validate": _cmd_validate}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_USAGE
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
