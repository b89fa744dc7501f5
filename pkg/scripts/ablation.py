"""Per-part pose errors without fusion next to the fused estimate.

    python scripts/ablation.py --frames 500 --seed 7
    python scripts/ablation.py --frames 500 --no-range-dropout --split-range 12.5
"""
from __future__ import annotations

import argparse
from dataclasses import replace

from posefuse.config import PipelineConfig
from posefuse.harness import ablate_single_object, run_pipeline, sample_pose_set
from posefuse.scene import default_scene


def _table(rows, title: str) -> None:
    print(title)
    print(f"{'part':>18s} {'n':>5s} {'mean m':>8s} {'max m':>8s} {'mean deg':>9s} {'max deg':>8s}")
    for r in rows:
        if r["absent"]:
            print(f"{r['name']:>18s} {0:5d}   absent")
            continue
        print(f"{r['name']:>18s} {r['n_frames']:5d} {r['mae_pos']:8.3f} {r['max_pos']:8.3f} "
              f"{r['mae_rot_deg']:9.3f} {r['max_rot_deg']:8.3f}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frames", type=int, default=500)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--sigma", type=float, default=2.0)
    ap.add_argument("--no-range-dropout", action="store_true")
    ap.add_argument("--split-range", type=float, help="also tabulate frames nearer/farther than this")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    base = PipelineConfig(n_frames=args.frames, seed=args.seed, workers=args.workers)
    noise = replace(base.noise, pixel_sigma=args.sigma, range_dropout=not args.no_range_dropout)
    cfg = replace(base, noise=noise)
    scene = default_scene()
    records = run_pipeline(scene, sample_pose_set(cfg), cfg)
    _table(ablate_single_object(records, scene, cfg.fusion.gate), f"all {len(records)} frames")
    if args.split_range:
        near = [r for r in records if r.range < args.split_range]
        far = [r for r in records if r.range >= args.split_range]
        _table(ablate_single_object(near, scene), f"\nrange < {args.split_range} m ({len(near)} frames)")
        _table(ablate_single_object(far, scene), f"\nrange >= {args.split_range} m ({len(far)} frames)")


if __name__ == "__main__":
    main()
