"""Engine CLI: serve, export, stats, replay-session.

replay-session is the research entry point: it re-runs the analyzer over an
exported event file and prints one canonical label JSON line per label, so a
study's labels can be reproduced from the raw trace alone.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .analyzer import Analyzer, RuleSet, StatementTable, load_taxonomy
from .config import EngineConfig
from .engine import Engine
from .model import parse_event_line


def _load_config(args) -> EngineConfig:
    if args.config:
        config = EngineConfig.from_file(args.config)
    else:
        config = EngineConfig()
    overrides = {}
    if getattr(args, "data_dir", None):
        overrides["data_dir"] = args.data_dir
    if getattr(args, "port", None):
        overrides["port"] = args.port
    if overrides:
        from dataclasses import replace

        config = replace(config, **overrides)
    return config


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    config = _load_config(args)
    engine = Engine(config)
    engine.start_ticker()
    app = create_app(engine)
    uvicorn.run(app, host=args.host, port=config.port, log_level="info")
    engine.close()
    return 0


def cmd_export(args) -> int:
    config = _load_config(args)
    engine = Engine(config)
    data = engine.export(args.experiment_id)
    if args.out:
        Path(args.out).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
    engine.close()
    return 0


def cmd_stats(args) -> int:
    config = _load_config(args)
    engine = Engine(config)
    stats = engine.admin.compute_stats(args.experiment_id, engine.store)
    json.dump(stats.to_doc(), sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    engine.close()
    return 0


def cmd_replay_session(args) -> int:
    config = _load_config(args)
    taxonomy = load_taxonomy(config.resolved("taxonomy"), config.taxonomy_profile)
    statements = StatementTable.from_file(config.resolved("statements"))
    ruleset = RuleSet.from_file(config.resolved("label_rules"), taxonomy)
    analyzer = Analyzer(ruleset, taxonomy, statements, config.analyzer)

    events = []
    with open(args.export_file, "rb") as fh:
        for line in fh:
            if not line.strip():
                continue
            event = parse_event_line(line)
            if event.session_id == args.session_id:
                events.append(event)
    events.sort(key=lambda e: e.server_seq if e.server_seq is not None else 0)
    for label in analyzer.label_stream(args.session_id, events):
        sys.stdout.buffer.write(label.to_bytes() + b"\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="srlengine", description="Regulated-learning engine")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="start all services")
    serve.add_argument("--config", default=None, help="path to engine config JSON")
    serve.add_argument("--port", type=int, default=None)
    serve.add_argument("--data-dir", default=None)
    serve.add_argument("--host", default="127.0.0.1")
    serve.set_defaults(func=cmd_serve)

    export = sub.add_parser("export", help="dump an experiment's events as NDJSON")
    export.add_argument("experiment_id")
    export.add_argument("--config", default=None)
    export.add_argument("--data-dir", default=None)
    export.add_argument("--out", default=None)
    export.set_defaults(func=cmd_export)

    stats = sub.add_parser("stats", help="print experiment statistics")
    stats.add_argument("experiment_id")
    stats.add_argument("--config", default=None)
    stats.add_argument("--data-dir", default=None)
    stats.set_defaults(func=cmd_stats)

    replay = sub.add_parser("replay-session", help="re-run the analyzer over an export")
    replay.add_argument("export_file")
    replay.add_argument("session_id")
    replay.add_argument("--config", default=None)
    replay.set_defaults(func=cmd_replay_session)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
