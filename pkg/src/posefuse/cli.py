"""Command-line interface.

Exit codes: 0 success, 2 configuration or input error, 3 no usable output.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .camera import CameraIntrinsics
from .config import ConfigError, PipelineConfig, load_config
from .fusion import NoInliers, fuse, quantile_for_d
from .harness import (
    assemble_record,
    build_report,
    estimate_parts,
    frame_stream,
    run_pipeline,
    sample_pose_set,
    simulate_frame,
    stage_streams,
)
from .scene import Scene, SceneError, default_scene

log = logging.getLogger("posefuse")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EMPTY = 3


class _EmptyOutput(Exception):
    pass


# ------------------------------------------------------------------ helpers


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.intrinsics:
        try:
            cfg = replace(cfg, intrinsics=CameraIntrinsics.from_dict(io.read_json(args.intrinsics)))
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"bad intrinsics file {args.intrinsics}: {exc}") from exc
    if getattr(args, "n", None) is not None:
        cfg = replace(cfg, n_frames=args.n)
    return cfg


def _scene(args) -> Scene:
    return Scene.load(args.scene) if args.scene else default_scene()


def _poses(args, cfg: PipelineConfig):
    if getattr(args, "poses", None):
        ids, poses, _ = io.read_poses(args.poses)
        return ids, poses
    poses = sample_pose_set(cfg)
    return list(range(len(poses))), poses


def _write_report(records, scene, cfg, out: str | None) -> dict:
    report = build_report(records, scene, cfg)
    text = io.dumps(report)
    if out:
        path = Path(out)
        path.write_text(text)
        io.write_frame_csv(path.with_suffix(".csv"), records)
    else:
        sys.stdout.write(text)
    if report["n_usable"] == 0:
        raise _EmptyOutput("no usable frames")
    return report


def _emit(obj, out: str | None) -> None:
    if out:
        io.write_json(out, obj)
    else:
        sys.stdout.write(io.dumps(obj))


# ---------------------------------------------------------------- commands


def cmd_sample_poses(args) -> int:
    poses = sample_pose_set(_config(args))
    io.write_poses(args.out or sys.stdout, poses)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg, scene = _config(args), _scene(args)
    ids, poses = _poses(args, cfg)
    out = []
    for k, (fid, pose) in enumerate(zip(ids, poses)):
        det_ss, perm_ss, _ = stage_streams(frame_stream(cfg.seed, k))
        ds, c_g, loss = simulate_frame(pose, scene, cfg, det_ss, perm_ss)
        rec = io.detections_to_dict(fid, ds)
        rec.update(c_g=c_g.astype(int), loss=loss)
        out.append(rec)
    _emit(out, args.out)
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg, scene = _config(args), _scene(args)
    records = io.read_json(args.detections)
    out = []
    for k, data in enumerate(records):
        fid, ds = io.detections_from_dict(data)
        _, _, pnp_ss = stage_streams(frame_stream(cfg.seed, k))
        rec = io.estimates_to_dict(fid, estimate_parts(scene, cfg.intrinsics, ds, cfg, pnp_ss))
        if "loss" in data:
            rec["loss"] = data["loss"]
        out.append(rec)
    _emit(out, args.out)
    return EXIT_OK


def cmd_fuse(args) -> int:
    cfg = _config(args)
    out, usable = [], 0
    for data in io.read_json(args.estimates):
        fid, parts = io.estimates_from_dict(data)
        try:
            fused = fuse([p.camera_position for p in parts], [p.camera_attitude for p in parts],
                         [p.confidence for p in parts], cfg.fusion)
            usable += 1
            out.append(io.fused_to_dict(fid, fused))
        except NoInliers as exc:
            out.append(io.fused_to_dict(fid, None, str(exc)))
    _emit(out, args.out)
    return EXIT_OK if usable else EXIT_EMPTY


def cmd_report(args) -> int:
    """Fuse and score stored estimates against a pose file."""
    cfg, scene = _config(args), _scene(args)
    ids, poses = io.read_poses(args.poses)[:2]
    by_id = dict(zip(ids, poses))
    records = []
    for data in io.read_json(args.estimates):
        fid, parts = io.estimates_from_dict(data)
        if fid not in by_id:
            raise io.FormatError(f"frame {fid} has no pose in {args.poses}")
        loss = data.get("loss")
        records.append(assemble_record(fid, by_id[fid], parts, cfg,
                                       math.nan if loss is None else float(loss)))
    _write_report(records, scene, cfg, args.out)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg, scene = _config(args), _scene(args)
    ids, poses = _poses(args, cfg)
    records = run_pipeline(scene, poses, cfg, ids)
    if args.fused_out:
        io.write_json(args.fused_out, [io.fused_to_dict(r.frame_id, r.fused, r.gap_reason) for r in records])
    _write_report(records, scene, cfg, args.out)
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg, scene = _config(args), _scene(args)
    ids, poses = _poses(args, cfg)
    rows = build_report(run_pipeline(scene, poses, cfg, ids), scene, cfg)["per_part"]
    if args.out:
        io.write_json(args.out, rows)
    for row in rows:
        err = "absent" if row["absent"] else f"mean {row['mae_pos']:.3f} m  max {row['max_pos']:.3f} m"
        print(f"{row['name']:>18s}  n={row['n_frames']:4d}  {err}")
    return EXIT_OK if rows[-1]["n_frames"] else EXIT_EMPTY


def cmd_uq(args) -> int:
    try:
        angle = quantile_for_d(args.d, args.p)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"{np.degrees(angle):.4f}")
    return EXIT_OK


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scene", help="scene JSON (default: built-in ship model)")
    common.add_argument("--intrinsics", help="intrinsics JSON")
    common.add_argument("--config", help="pipeline config (TOML or JSON)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="posefuse", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample-poses", parents=[common], help="sample camera poses to CSV")
    s.add_argument("--n", type=int, help="number of poses (default: config n_frames)")
    s.set_defaults(func=cmd_sample_poses)

    s = sub.add_parser("simulate", parents=[common], help="simulate detections for poses")
    s.add_argument("--poses", help="pose CSV (default: sample from config)")
    s.add_argument("--n", type=int)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("estimate", parents=[common], help="per-part RANSAC-EPnP on detections")
    s.add_argument("--detections", required=True)
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("fuse", parents=[common], help="fuse per-part estimates")
    s.add_argument("--estimates", required=True)
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("report", parents=[common], help="score stored estimates against poses")
    s.add_argument("--poses", required=True)
    s.add_argument("--estimates", required=True)
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("run", parents=[common], help="end-to-end evaluation")
    s.add_argument("--poses", help="replay a pose CSV instead of sampling")
    s.add_argument("--n", type=int)
    s.add_argument("--fused-out", help="also write fused poses JSON")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("ablate", parents=[common], help="per-part errors without fusion")
    s.add_argument("--poses")
    s.add_argument("--n", type=int)
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("uq", parents=[common], help="attitude-error quantile in degrees")
    s.add_argument("--d", type=float, required=True, help="singular value of E[R]")
    s.add_argument("--p", type=float, required=True, help="probability")
    s.set_defaults(func=cmd_uq)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SceneError, io.FormatError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except _EmptyOutput as exc:
        log.error("%s", exc)
        return EXIT_EMPTY


if __name__ == "__main__":
    sys.exit(main())
