"""Command line front end: scene-gen, capture, track, eval.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure
(unwritable output, internal error). Diagnostics go to stderr; stdout and
output files carry machine-readable results only.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from . import __version__
from .errors import InputError, RelotrackError
from .evaluation import (
    load_experiment_config,
    render_experiment_table,
    result_to_dict,
    run_experiment,
    save_experiment_result,
)
from .fileio import FORMAT_VERSION, dump_json
from .nav import load_route
from .percept import (
    CameraModel,
    DetectorConfig,
    capture_scene,
    load_camera_config,
    load_detector_config,
    load_frame_log,
    save_frame_log,
)
from .scene import apply_changes, load_changeset, load_scene, randomize_placements, save_scene
from .track import (
    TrackerConfig,
    compare_scenes,
    load_tracker_config,
    render_report_table,
    report_to_dict,
    save_report,
)


def _note(message: str) -> None:
    print(message, file=sys.stderr)


def _cmd_scene_gen(args) -> int:
    scene = load_scene(args.scene)
    if args.changeset is not None:
        derived = apply_changes(scene, load_changeset(args.changeset))
    else:
        classes = {c.strip() for part in (args.movable or []) for c in part.split(",") if c.strip()}
        if not classes:
            raise InputError("scene-gen: provide --changeset, or --movable with at least one class")
        derived = randomize_placements(scene, args.seed, classes, min_displacement=args.min_move)
    save_scene(derived, args.out)
    _note(f"wrote {args.out}")
    return 0


def _cmd_capture(args) -> int:
    scene = load_scene(args.scene)
    route = load_route(args.route)
    camera = load_camera_config(args.camera) if args.camera else CameraModel()
    detector = load_detector_config(args.detector) if args.detector else DetectorConfig()
    if args.seed is not None:
        detector = dataclasses.replace(detector, seed=args.seed)
    log = capture_scene(scene, route, camera, detector)
    save_frame_log(log, args.out)
    _note(f"wrote {args.out} ({len(log.frames)} frames)")
    return 0


def _cmd_track(args) -> int:
    pre = load_frame_log(args.pre)
    post = load_frame_log(args.post)
    tracker = load_tracker_config(args.tracker) if args.tracker else TrackerConfig()
    report = compare_scenes(pre, post, tracker)
    if args.out:
        save_report(report, args.out)
        _note(f"wrote {args.out}")
    if args.format == "table":
        sys.stdout.write(render_report_table(report))
    else:
        sys.stdout.write(dump_json(report_to_dict(report)))
    return 0


def _cmd_eval(args) -> int:
    cfg = load_experiment_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    result = run_experiment(cfg)
    if args.out:
        save_experiment_result(result, args.out)
        _note(f"wrote {args.out}")
    if args.format == "json":
        sys.stdout.write(dump_json(result_to_dict(result)))
    else:
        sys.stdout.write(render_experiment_table(result))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relotrack",
        description="Track object relocations between two traversals of a fixed route.",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"relotrack {__version__} (format_version {FORMAT_VERSION})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scene-gen", help="derive a scene by seeded randomization or a changeset")
    p.add_argument("--scene", required=True, help="base scene file")
    p.add_argument("--out", required=True, help="output scene file")
    p.add_argument("--seed", type=int, default=0, help="randomization seed (overrides nothing else)")
    p.add_argument("--movable", action="append",
                   help="class labels eligible to move; repeat the flag or separate with commas")
    p.add_argument("--min-move", type=float, default=0.0, help="minimum displacement for re-placed objects, meters")
    p.add_argument("--changeset", help="changeset file; applied instead of randomizing")
    p.set_defaults(handler=_cmd_scene_gen)

    p = sub.add_parser("capture", help="traverse a route and write the detection log")
    p.add_argument("--scene", required=True)
    p.add_argument("--route", required=True)
    p.add_argument("--camera", help="camera config file (default: built-in camera)")
    p.add_argument("--detector", help="detector config file (default: noise-free detector)")
    p.add_argument("--seed", type=int, help="overrides the detector config seed")
    p.add_argument("--out", required=True, help="output frame log (JSON Lines)")
    p.set_defaults(handler=_cmd_capture)

    p = sub.add_parser("track", help="compare two frame logs and report relocations")
    p.add_argument("--pre", required=True, help="frame log of the reference traversal")
    p.add_argument("--post", required=True, help="frame log of the later traversal")
    p.add_argument("--tracker", help="tracker config file (default: threshold 9, min confidence 0.8)")
    p.add_argument("--out", help="also write the JSON report here")
    p.add_argument("--format", choices=("json", "table"), default="json", help="stdout format")
    p.set_defaults(handler=_cmd_track)

    p = sub.add_parser("eval", help="run a full experiment config and print the summary")
    p.add_argument("--config", required=True, help="experiment config file")
    p.add_argument("--seed", type=int, help="overrides the experiment config seed")
    p.add_argument("--out", help="also write the JSON result here")
    p.add_argument("--format", choices=("json", "table"), default="table", help="stdout format")
    p.set_defaults(handler=_cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except InputError as exc:
        _note(f"error: {exc}")
        return 1
    except RelotrackError as exc:
        _note(f"error: {exc}")
        return 2
    except OSError as exc:
        _note(f"error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
