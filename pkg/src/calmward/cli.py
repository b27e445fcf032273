"""Command-line entry points.

Subcommands: score-questionnaire, simulate, experiment, serve, replay.
Outputs go to stdout (JSON by default; CSV where noted); validation
failures exit non-zero with a message on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import load_config, preset_names
from .errors import CalmwardError, ValidationError
from .harness import SessionLog, dumps_canonical, replay, run_experiment, run_session
from .questionnaire import QuestionnaireResponse, score

DEFAULT_LISTEN_ENV = "CALMWARD_LISTEN"


def _read_questionnaire_file(path: str) -> QuestionnaireResponse:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}") from exc
    items = data["items"] if isinstance(data, dict) and "items" in data else data
    if not isinstance(items, list):
        raise ValidationError("questionnaire file must hold a list of 19 integers "
                              "or an object with an 'items' list")
    return QuestionnaireResponse(tuple(int(v) for v in items))


def cmd_score_questionnaire(args) -> int:
    response = _read_questionnaire_file(args.file)
    profile = score(response)
    print(dumps_canonical(profile.to_dict()))
    return 0


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    questionnaire = None
    if args.questionnaire:
        questionnaire = _read_questionnaire_file(args.questionnaire)
    log, metrics = run_session(config, questionnaire, arm=args.arm, seed=args.seed)
    if args.log:
        Path(args.log).write_text(log.to_ndjson())
    print(dumps_canonical(metrics.to_dict()))
    return 0


def cmd_experiment(args) -> int:
    config = load_config(args.config)
    report = run_experiment(config, args.n, args.seed)
    if args.out == "csv":
        sys.stdout.write(report.to_csv())
    else:
        print(dumps_canonical(report.to_dict()))
    if args.csv_file:
        Path(args.csv_file).write_text(report.to_csv())
    return 0


def cmd_replay(args) -> int:
    try:
        text = Path(args.log).read_text()
    except OSError as exc:
        print(f"cannot read {args.log}: {exc}", file=sys.stderr)
        return 2
    log = SessionLog.from_ndjson(text)
    replay(log)
    print(f"{args.log}: verified ({len(log.records)} records)")
    return 0


def cmd_serve(args) -> int:
    from .server import run_server

    config = load_config(args.config)
    run_server(config, args.listen, log_dir=args.log_dir)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="calmward",
        description="Adaptive stress-intervention engine and simulation harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score-questionnaire",
                       help="score a 19-item preference questionnaire file")
    p.add_argument("file", help="JSON file: a list of 19 integers or {'items': [...]}")
    p.set_defaults(func=cmd_score_questionnaire)

    p = sub.add_parser("simulate", help="run one agent-driven session")
    p.add_argument("--config", required=True,
                   help=f"config file path or preset name ({', '.join(preset_names())})")
    p.add_argument("--arm", choices=("intervention", "control"), required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--questionnaire", help="override the config's questionnaire file")
    p.add_argument("--log", help="write the session log (NDJSON) to this path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("experiment", help="run a two-arm experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--n", type=int, required=True, help="sessions per arm")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", choices=("json", "csv"), default="json")
    p.add_argument("--csv-file", help="also write the CSV table to this path")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("replay", help="verify a session log by replay")
    p.add_argument("log")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="serve live sessions over TCP or stdio")
    p.add_argument("--config", required=True)
    p.add_argument("--listen", default=os.environ.get(DEFAULT_LISTEN_ENV, "127.0.0.1:7350"),
                   help="host:port or 'stdio' (default from $CALMWARD_LISTEN)")
    p.add_argument("--log-dir", help="write each finished session's log here")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CalmwardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
