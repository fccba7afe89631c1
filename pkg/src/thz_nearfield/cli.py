"""Command-line entry point: ``thz-nearfield run|list|validate``.

Exit codes: 0 success, 1 configuration error, 2 runtime error.  Progress
goes to stderr; stdout carries one JSON summary line per command.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time

from .experiments.config import ConfigError, load_config
from .experiments.presets import THREADS_ENV, list_experiments, thread_count

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("thz_nearfield")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thz-nearfield", description="Near-field THz experiment runner.",
                                epilog=f"Set {THREADS_ENV}=<n> to evaluate sweep points on n threads.")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment and write CSV, manifest and figure")
    run.add_argument("--config", required=True, help="TOML configuration file")
    run.add_argument("--seed", type=int, help="override the configured seed")
    run.add_argument("--out", help="override the configured output directory")
    run.add_argument("--no-figure", action="store_true", help="skip the PNG rendering")
    run.add_argument("-q", "--quiet", action="store_true", help="suppress progress messages")
    sub.add_parser("list", help="list experiment presets and their defaults")
    val = sub.add_parser("validate", help="check a configuration without running it")
    val.add_argument("--config", required=True, help="TOML configuration file")
    return p


def _load(path):
    try:
        return load_config(path)
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc.strerror or exc}"]) from None


def _report_config_errors(err: ConfigError) -> int:
    for e in err.errors:
        print(f"config error: {e}", file=sys.stderr)
    return EXIT_CONFIG


def _run(args) -> int:
    from .experiments.runner import run_experiment

    try:
        cfg = _load(args.config)
        if args.seed is not None:
            cfg = cfg.with_(seed=args.seed)
        threads = thread_count()
    except ConfigError as err:
        return _report_config_errors(err)
    except ValueError as err:  # malformed thread override
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    def progress(msg):
        if not args.quiet:
            print(f"[{time.strftime('%H:%M:%S')}] {msg}", file=sys.stderr, flush=True)

    progress(f"running {cfg.experiment} (kind {cfg.kind}, seed {cfg.seed}, {threads} thread(s))")
    try:
        res = run_experiment(cfg, out_dir=args.out, figures=not args.no_figure, progress=progress)
    except OSError as exc:
        print(f"runtime error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - any failure after validation is a runtime error
        log.debug("run failed", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for flag in res.table.flags:
        progress(f"flagged row {flag['row']}: {flag['reason']}")
    progress(f"wrote {res.csv_path} in {res.manifest['wall_clock_s']:.1f} s")
    print(json.dumps({"status": "ok", "experiment": cfg.experiment, "csv": str(res.csv_path),
                      "manifest": str(res.manifest_path),
                      "figure": str(res.figure_path) if res.figure_path else None,
                      "rows": len(res.table.rows), "flagged_rows": len(res.table.flags),
                      "summary": res.table.summary}, sort_keys=True))
    return EXIT_OK


def _validate(args) -> int:
    try:
        cfg = _load(args.config)
    except ConfigError as err:
        return _report_config_errors(err)
    print(json.dumps({"status": "valid", "config": cfg.to_dict()}, sort_keys=True))
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list":
        sys.stdout.write(list_experiments())
        return EXIT_OK
    if args.command == "validate":
        return _validate(args)
    return _run(args)


if __name__ == "__main__":
    sys.exit(main())
