"""Batch command line: ``touchmap <pipeline|detect|track|map|render|synth|plot>``.

Exit codes: 0 ok, 2 config, 3 input, 4 degenerate data, 5 internal.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import artifacts
from .config import ConfigError, PipelineConfig, load_config
from .frames import DegenerateSequenceError, SequenceError, save_sequence
from .pipeline import (ARTIFACT_NAMES, dense_for, map_trajectories, read_input,
                       run_pipeline)
from .plot import plot_artifact
from .preprocess import build_detections
from .render import render, save_signal_csv
from .synth import KINDS, SynthParams, synthesize
from .tracking import solve_tracking

EXIT_OK, EXIT_CONFIG, EXIT_INPUT, EXIT_DEGENERATE, EXIT_INTERNAL = 0, 2, 3, 4, 5

log = logging.getLogger("touchmap")


class InputError(Exception):
    pass


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    changes = {}
    if getattr(args, "input", None):
        changes["input"] = args.input
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "jobs", None) is not None:
        changes["jobs"] = args.jobs
    if getattr(args, "out_dir", None):
        changes["out_dir"] = args.out_dir
    try:
        return dataclasses.replace(cfg, **changes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _out(cfg, name) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out / ARTIFACT_NAMES[name]


def _stage_file(explicit, cfg, name) -> Path:
    path = Path(explicit) if explicit else Path(cfg.out_dir) / ARTIFACT_NAMES[name]
    if not path.exists():
        raise InputError(f"missing {name} artifact: {path}")
    return path


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    result = run_pipeline(cfg, cfg.out_dir, stage_dump=args.stage_dump)
    print(result.summary())
    for name, path in result.paths.items():
        print(f"wrote {name:<13} {path}")
    return EXIT_OK


def cmd_detect(args) -> int:
    cfg = _config(args)
    dense, dets = build_detections(read_input(cfg), cfg.detection)
    path = _out(cfg, "detections")
    path.write_text(artifacts.dump_detections(dets))
    if args.stage_dump:
        np.save(Path(cfg.out_dir) / "dense.npy", dense.frames)
    print(f"detections {len(dets)} -> {path}")
    return EXIT_OK


def cmd_track(args) -> int:
    cfg = _config(args)
    dets = artifacts.load_detections(_stage_file(args.detections, cfg, "detections"))
    trajs = solve_tracking(dets, cfg.tracking)
    path = _out(cfg, "trajectories")
    path.write_text(artifacts.dump_trajectories(trajs))
    print(f"trajectories {len(trajs)} -> {path}")
    return EXIT_OK


def cmd_map(args) -> int:
    cfg = _config(args)
    trajs = artifacts.load_trajectories(_stage_file(args.trajectories, cfg, "trajectories"))
    sel, conflicts = map_trajectories(trajs, dense_for(cfg), cfg)
    path = _out(cfg, "selection")
    path.write_text(artifacts.dump_selection(sel, cfg.workspace.array(), conflicts))
    print(f"selected {list(sel.chosen)} translation={sel.transform.translation} "
          f"score={sel.total_score:.6f} -> {path}")
    return EXIT_OK


def cmd_render(args) -> int:
    cfg = _config(args)
    trajs = artifacts.load_trajectories(_stage_file(args.trajectories, cfg, "trajectories"))
    sel, _, _ = artifacts.load_selection(_stage_file(args.selection, cfg, "selection"))
    sig = render(sel, trajs, dense_for(cfg), cfg.workspace.array(), cfg.render)
    path = _out(cfg, "signal")
    save_signal_csv(sig, path)
    print(f"signal {sig.channels.shape[-1]} samples -> {path}")
    return EXIT_OK


def _parse_set(items):
    fields = {f.name: f for f in dataclasses.fields(SynthParams)}
    out = {}
    for item in items or ():
        key, _, raw = item.partition("=")
        if key not in fields:
            raise ConfigError(f"unknown synth parameter {key!r}")
        typ = str(fields[key].type)
        if "int" in typ and "float" not in typ:
            out[key] = int(raw)
        elif "str" in typ:
            out[key] = raw
        else:
            out[key] = float(raw)
    return out


def cmd_synth(args) -> int:
    try:
        params = SynthParams(**_parse_set(args.set))
        if args.frames is not None:
            params = dataclasses.replace(params, n_frames=args.frames)
        if args.layout is not None:
            params = dataclasses.replace(params, layout=args.layout)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid synth parameters: {exc}") from None
    seq = synthesize(args.kind, params, seed=args.seed or 0)
    save_sequence(seq, args.out)
    print(f"{args.kind}: {len(seq)} frames, {seq.layout.n_cells} cells -> {args.out}")
    return EXIT_OK


def cmd_plot(args) -> int:
    if not Path(args.artifact).exists():
        raise InputError(f"no such artifact: {args.artifact}")
    plot_artifact(args.artifact, args.out, frames=args.frames)
    print(f"plot -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="touchmap", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_input=True):
        p.add_argument("--config", help="pipeline config JSON (defaults if omitted)")
        p.add_argument("--out-dir", help="artifact directory (overrides config)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jobs", type=int, default=None, help="threads for transform search")
        p.add_argument("--stage-dump", action="store_true",
                       help="also write resolved config and preprocessed frames")
        if needs_input:
            p.add_argument("--input", help="frame sequence (overrides config)")

    p = sub.add_parser("pipeline", help="run every stage")
    common(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("detect", help="frames -> detections.csv")
    common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("track", help="detections.csv -> trajectories.csv")
    common(p, needs_input=False)
    p.add_argument("--detections")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("map", help="trajectories.csv -> selection.json")
    common(p)
    p.add_argument("--trajectories")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("render", help="selection.json -> signal.csv")
    common(p)
    p.add_argument("--trajectories")
    p.add_argument("--selection")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("synth", help="write a synthetic gesture sequence")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int)
    p.add_argument("--layout", help="layout preset name")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a gesture parameter (repeatable)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("plot", help="SVG view of a stage artifact")
    p.add_argument("artifact")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", help="frame sequence for the background grid")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateSequenceError as exc:
        print(f"degenerate data: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (SequenceError, InputError, artifacts.ArtifactError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
