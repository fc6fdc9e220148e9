"""Command-line pipeline: track / eval / synth / diary / diary-eval.

Every run writes a manifest (effective config, input digests, seed, version,
stage timings) so outputs are attributable and reproducible. Numeric kernels
are pinned to a single BLAS thread; `--threads` caps auxiliary parallelism and
never changes results.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from . import diary as diary_mod
from . import metrics, model, synth
from .affinity import build_graphs
from .model import TrackerConfig
from .solver import solve
from .trajectories import form_trajectories

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_RUNTIME):
        super().__init__(message)
        self.code = code


def _digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _require_file(path: str) -> str:
    if not os.path.isfile(path):
        raise CliError(f"input file not found: {path}", EXIT_USAGE)
    return path


def _load_config(args) -> TrackerConfig:
    values = {}
    if args.config:
        with open(_require_file(args.config), "r", encoding="utf-8") as fh:
            values.update(json.load(fh))
    for item in args.opt or []:
        key, _, raw = item.partition("=")
        if not _:
            raise CliError(f"--opt expects KEY=VALUE, got {item!r}", EXIT_USAGE)
        values[key] = json.loads(raw)
    known = {f.name for f in dataclasses.fields(TrackerConfig)}
    unknown = set(values) - known
    if unknown:
        raise CliError(f"unknown config keys: {sorted(unknown)}", EXIT_USAGE)
    try:
        return TrackerConfig(**values)
    except model.DataError as e:
        raise CliError(str(e), EXIT_USAGE) from e


def _manifest(args, stage_times: dict[str, float], inputs: dict[str, str],
              extra: dict) -> dict:
    return {
        "tool": "idtrack",
        "version": __version__,
        "command": args.command,
        "seed": getattr(args, "seed", None),
        "threads": getattr(args, "threads", 1),
        "inputs": {name: _digest(path) for name, path in inputs.items()},
        "flags": {k: v for k, v in vars(args).items()
                  if k not in ("func", "command") and v is not None},
        "stage_seconds": stage_times,
        **extra,
    }


def _write_manifest(args, manifest: dict) -> None:
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, default=str)


def _timed(stage_times: dict, name: str):
    class _T:
        def __enter__(self):
            self.t0 = time.perf_counter()

        def __exit__(self, *exc):
            stage_times[name] = round(time.perf_counter() - self.t0, 4)

    return _T()


def cmd_track(args) -> int:
    detections = _require_file(args.detections)
    cfg = _load_config(args)
    stage_times: dict[str, float] = {}
    try:
        with _timed(stage_times, "load"):
            obs_set = model.load_detections(detections)
    except model.DataError as e:
        raise CliError(f"load: {e}", EXIT_USAGE) from e
    try:
        with threadpool_limits(limits=1):
            with _timed(stage_times, "affinity"):
                graphs = build_graphs(obs_set, cfg)
            with _timed(stage_times, "solve"):
                Y, clamped = model.build_label_matrix(obs_set)
                F, trace = solve(graphs, Y, cfg, use_slc=not args.no_slc)
            with _timed(stage_times, "trajectories"):
                trajectories = form_trajectories(F, obs_set, cfg, clamped,
                                                 enforce_slc=not args.no_slc)
    except Exception as e:
        raise CliError(f"track pipeline: {e}", EXIT_RUNTIME) from e
    os.makedirs(args.out_dir, exist_ok=True)
    model.write_trajectories(trajectories, os.path.join(args.out_dir, "trajectories.jsonl"))
    trace.to_jsonl(os.path.join(args.out_dir, "trace.jsonl"))
    _write_manifest(args, _manifest(args, stage_times, {"detections": detections}, {
        "config": dataclasses.asdict(cfg),
        "n_observations": len(obs_set),
        "n_trajectories": len(trajectories),
        "graph_stats": dict(graphs.stats),
    }))
    return EXIT_OK


def cmd_eval(args) -> int:
    traj_path = _require_file(args.trajectories)
    gt_path = _require_file(args.ground_truth)
    stage_times: dict[str, float] = {}
    with _timed(stage_times, "eval"):
        try:
            trajectories = model.load_trajectories(traj_path)
            gt = model.load_ground_truth(gt_path)
        except model.DataError as e:
            raise CliError(f"load: {e}", EXIT_USAGE) from e
        report = metrics.evaluate(trajectories, gt, radius_cm=args.radius_cm)
    if args.csv:
        print(metrics.EvalReport.csv_header())
        print(report.to_csv_row())
    else:
        print(report.to_json())
    _write_manifest(args, _manifest(args, stage_times, {
        "trajectories": traj_path, "ground_truth": gt_path}, {"report": json.loads(report.to_json())}))
    return EXIT_OK


def cmd_synth(args) -> int:
    stage_times: dict[str, float] = {}
    with _timed(stage_times, "synth"):
        if args.scenario:
            with open(_require_file(args.scenario), "r", encoding="utf-8") as fh:
                raw = json.load(fh)
            for key in ("arena_cm", "agent_speed_cmps"):
                if key in raw:
                    raw[key] = tuple(raw[key])
            if "occlusion_windows" in raw:
                raw["occlusion_windows"] = tuple(tuple(w) for w in raw["occlusion_windows"])
            if args.seed is not None:
                raw["seed"] = args.seed
            scenario = synth.ScenarioConfig(**raw)
            obs_set, gt, prov = synth.generate_with_provenance(scenario)
            cfg = synth._calibrated_config(obs_set, prov)
        else:
            obs_set, gt, cfg = synth.preset(args.preset, seed=args.seed or 0)
    os.makedirs(args.out_dir, exist_ok=True)
    model.write_detections(obs_set, os.path.join(args.out_dir, "detections.jsonl"))
    model.write_ground_truth(gt, os.path.join(args.out_dir, "groundtruth.jsonl"))
    with open(os.path.join(args.out_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(dataclasses.asdict(cfg), fh, indent=2)
    _write_manifest(args, _manifest(args, stage_times, {}, {
        "n_observations": len(obs_set), "n_ground_truth": len(gt)}))
    return EXIT_OK


def cmd_diary(args) -> int:
    traj_path = _require_file(args.trajectories)
    map_path = _require_file(args.map)
    stage_times: dict[str, float] = {}
    with _timed(stage_times, "diary"):
        try:
            trajectories = model.load_trajectories(traj_path)
            scene = diary_mod.load_scene_map(map_path)
        except (model.DataError, json.JSONDecodeError) as e:
            raise CliError(f"load: {e}", EXIT_USAGE) from e
        events = diary_mod.detect_all(trajectories, scene, args.fps)
        text, stats = diary_mod.render_diary(events, trajectories, scene, args.fps)
        timeline = diary_mod.state_timeline(trajectories, events, scene)
    os.makedirs(args.out_dir, exist_ok=True)
    diary_mod.write_events(events, os.path.join(args.out_dir, "events.jsonl"))
    diary_mod.write_timeline(timeline, os.path.join(args.out_dir, "timeline.jsonl"))
    with open(os.path.join(args.out_dir, "diary.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    with open(os.path.join(args.out_dir, "diary.json"), "w", encoding="utf-8") as fh:
        json.dump({"events": [dataclasses.asdict(e) for e in events], "stats": stats},
                  fh, indent=2, default=str)
    _write_manifest(args, _manifest(args, stage_times, {
        "trajectories": traj_path, "map": map_path}, {"n_events": len(events)}))
    return EXIT_OK


def cmd_diary_eval(args) -> int:
    pred_path = _require_file(args.events)
    gt_path = _require_file(args.gt_events)
    stage_times: dict[str, float] = {}
    with _timed(stage_times, "diary_eval"):
        pred = diary_mod.load_events(pred_path)
        gt = diary_mod.load_events(gt_path)
        pred_tl = diary_mod.load_timeline(args.timeline) if args.timeline else None
        gt_tl = diary_mod.load_timeline(args.gt_timeline) if args.gt_timeline else None
        report = diary_mod.evaluate_diary(pred, gt, fps=args.fps,
                                          pred_timeline=pred_tl, gt_timeline=gt_tl)
    print(report.to_json())
    inputs = {"events": pred_path, "gt_events": gt_path}
    if args.timeline:
        inputs["timeline"] = args.timeline
    if args.gt_timeline:
        inputs["gt_timeline"] = args.gt_timeline
    _write_manifest(args, _manifest(args, stage_times, inputs,
                                    {"report": json.loads(report.to_json())}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="idtrack",
                                     description="Identity-aware multi-person tracking pipeline.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with TrackerConfig keys")
        p.add_argument("--opt", action="append", metavar="KEY=VALUE",
                       help="override one config value (JSON-encoded)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out-dir", default=".", help="output directory")

    p = sub.add_parser("track", help="detections -> trajectories")
    common(p)
    p.add_argument("--detections", required=True)
    p.add_argument("--no-slc", action="store_true",
                   help="ablation: drop the spatial-locality repulsion term")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="score trajectories against ground truth")
    common(p)
    p.add_argument("--trajectories", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--radius-cm", type=float, default=100.0)
    p.add_argument("--csv", action="store_true", help="emit one CSV row")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic scene")
    common(p)
    p.add_argument("--preset", choices=("crossing", "crowded", "longgap"))
    p.add_argument("--scenario", help="JSON ScenarioConfig file")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("diary", help="trajectories -> activity events and diary")
    common(p)
    p.add_argument("--trajectories", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--fps", type=float, required=True)
    p.set_defaults(func=cmd_diary)

    p = sub.add_parser("diary-eval", help="score events against reference events")
    common(p)
    p.add_argument("--events", required=True)
    p.add_argument("--gt-events", required=True)
    p.add_argument("--timeline")
    p.add_argument("--gt-timeline")
    p.add_argument("--fps", type=float, required=True)
    p.set_defaults(func=cmd_diary_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "synth" and not (args.preset or args.scenario):
        parser.error("synth requires --preset or --scenario")
    try:
        return args.func(args)
    except CliError as e:
        print(f"idtrack {args.command}: {e}", file=sys.stderr)
        return e.code
    except OSError as e:
        print(f"idtrack {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
