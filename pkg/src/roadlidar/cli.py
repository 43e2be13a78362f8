"""Command-line front end.

Subcommands: ``annotate`` (run the teachers), ``merge``, ``evaluate``,
``simulate`` and ``iterate``.  Each reads a declarative JSON configuration
via ``--config``; ``--seed`` and ``--jobs`` override the configured values.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .core import ConfigError, DataError, InternalError
from .evaluate import DEFAULT_IOU_THRESHOLDS, evaluate
from .pipeline import (
    DEFAULT_ITERATE_SCORE_THRESHOLD,
    iterate,
    merge_supersets,
    parse_merge_config,
    parse_pipeline_config,
    run_annotate,
)
from .simulate import default_scene, load_scene, write_scene_outputs

log = logging.getLogger("roadlidar")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


def _read_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc


def _cmd_annotate(args: argparse.Namespace) -> int:
    if not args.config:
        raise ConfigError("annotate requires --config")
    config = parse_pipeline_config(args.config)
    if args.jobs:
        config.parallelism = args.jobs
    results, failures = run_annotate(config)
    for result in results:
        log.info("dataset %s: %s", result.name, json.dumps(result.stats, sort_keys=True))
    if failures:
        for name, message in sorted(failures.items()):
            log.error("dataset %s failed: %s", name, message)
        return EXIT_DATA
    return EXIT_OK


def _cmd_merge(args: argparse.Namespace) -> int:
    if not args.config:
        raise ConfigError("merge requires --config")
    inputs, output_root = parse_merge_config(args.config)
    index = merge_supersets(inputs, output_root)
    log.info("superset index written to %s", index)
    return EXIT_OK


def _cmd_evaluate(args: argparse.Namespace) -> int:
    if not args.config:
        raise ConfigError("evaluate requires --config")
    data = _read_json(args.config)
    try:
        pred_dir = Path(data["pred_dir"])
        truth_dir = Path(data["truth_dir"])
        thresholds = tuple(float(t) for t in data.get("thresholds", DEFAULT_IOU_THRESHOLDS))
        report_path = Path(data["report"]) if "report" in data else None
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid evaluate config: {exc}") from exc
    report = evaluate(pred_dir, truth_dir, thresholds, report_path)
    print(report.to_table())
    if report_path is not None:
        log.info("report written to %s", report_path)
    return EXIT_OK


def _cmd_simulate(args: argparse.Namespace) -> int:
    if args.config:
        spec = load_scene(args.config)
    else:
        spec = default_scene()
    if args.seed is not None:
        spec.seed = args.seed
    out_dir = Path(args.out) if args.out else Path("scene_out")
    paths = write_scene_outputs(spec, out_dir)
    log.info(
        "rendered %d frames (%d beams) to %s", spec.duration, spec.sensor.beam_count, out_dir
    )
    for kind, path in paths.items():
        log.info("  %s: %s", kind, path)
    return EXIT_OK


def _cmd_iterate(args: argparse.Namespace) -> int:
    if not args.config:
        raise ConfigError("iterate requires --config")
    data = _read_json(args.config)
    try:
        predictions = Path(data["predictions"])
        workspace = Path(data["workspace"])
        threshold = float(data.get("score_threshold", DEFAULT_ITERATE_SCORE_THRESHOLD))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid iterate config: {exc}") from exc
    round_dir = iterate(predictions, workspace, threshold)
    log.info("next-round labels written to %s", round_dir)
    return EXIT_OK


_COMMANDS = {
    "annotate": _cmd_annotate,
    "merge": _cmd_merge,
    "evaluate": _cmd_evaluate,
    "simulate": _cmd_simulate,
    "iterate": _cmd_iterate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roadlidar",
        description="Self-supervised auto-annotation for stationary roadside LiDAR.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("annotate", "run one teacher per configured dataset"),
        ("merge", "unify labeled datasets into a training superset"),
        ("evaluate", "score predicted labels against reference labels"),
        ("simulate", "render a synthetic scene with ground truth"),
        ("iterate", "turn detector predictions into next-round labels"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="declarative JSON configuration file")
        p.add_argument("--seed", type=int, help="override the configured random seed")
        p.add_argument("--jobs", type=int, help="override the configured worker count")
        if name == "simulate":
            p.add_argument("--out", help="output directory (default: scene_out)")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except DataError as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except InternalError as exc:
        log.error("internal invariant violation: %s", exc)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - map unexpected failures to exit code 3
        log.error("internal error: %s", exc)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
