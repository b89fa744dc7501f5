"""End-to-end evaluation: sample, project, detect, solve, fuse, score."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .camera import CameraIntrinsics
from .config import PipelineConfig, worker_count
from .detector import DetectionSet, SimulatedFrame, misassign, simulate
from .epnp import EstimationFailed, PartPoseEstimate, PnPError, estimate_pose
from .fusion import FusedPose, NoInliers, fuse
from .matching import hungarian_match, keypoint_loss
from .sampler import CameraPose, sample_pose
from .scene import Scene
from .so3 import geodesic_angle, log_so3

log = logging.getLogger(__name__)


@dataclass
class FrameRecord:
    frame_id: int
    true_pose: CameraPose
    fused: FusedPose | None
    per_part: list[PartPoseEstimate] = field(default_factory=list)
    pos_error: float = math.nan
    rot_error: float = math.nan
    pos_error_vec: np.ndarray | None = None
    eta: np.ndarray | None = None
    loss: float = math.nan
    c_g: np.ndarray | None = None
    gap_reason: str = ""

    @property
    def is_gap(self) -> bool:
        return self.fused is None

    @property
    def range(self) -> float:
        return float(np.linalg.norm(self.true_pose.position))


# ----------------------------------------------------------------- per frame


def frame_streams(seed: int, n_frames: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n_frames)


def frame_stream(seed: int, position: int) -> np.random.SeedSequence:
    """Stream of the frame at ``position``; equal to ``frame_streams(seed, n)[position]``."""
    return np.random.SeedSequence(seed, spawn_key=(position,))


def stage_streams(ss: np.random.SeedSequence) -> tuple[np.random.SeedSequence, ...]:
    """Detector, query-permutation and PnP streams of one frame."""
    return tuple(ss.spawn(3))


def sample_pose_set(cfg: PipelineConfig, n_frames: int | None = None) -> list[CameraPose]:
    n = cfg.n_frames if n_frames is None else n_frames
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x5A4D]))
    return [sample_pose(rng, cfg.sampler) for _ in range(n)]


def estimate_parts(scene: Scene, intr: CameraIntrinsics, ds: DetectionSet, cfg: PipelineConfig,
                   ss: np.random.SeedSequence) -> list[PartPoseEstimate]:
    """One RANSAC-EPnP solve per query whose most likely class is a ship part."""
    out = []
    null = scene.no_object_index
    streams = ss.spawn(ds.n_classes)
    for q in range(ds.n_classes):
        cls = int(np.argmax(ds.probs[q]))
        if cls == null:
            continue
        kp = ds.keypoints[q]
        valid = np.all(np.isfinite(kp), axis=1)
        try:
            est = estimate_pose(scene.part(cls).keypoints3d, kp, valid, intr, cfg.ransac,
                                np.random.default_rng(streams[q]))
        except (EstimationFailed, PnPError, np.linalg.LinAlgError) as exc:
            log.debug("query %d (class %d) failed: %s", q, cls, exc)
            continue
        est.class_index = cls
        est.confidence = float(ds.probs[q, cls])
        est.query = q
        out.append(est)
    return out


def fuse_estimates(estimates: list[PartPoseEstimate], cfg: PipelineConfig) -> FusedPose:
    return fuse(
        [e.camera_position for e in estimates],
        [e.camera_attitude for e in estimates],
        [e.confidence for e in estimates],
        cfg.fusion,
    )


def score_frame(rec: FrameRecord) -> None:
    if rec.fused is None:
        return
    truth = rec.true_pose
    rec.pos_error_vec = rec.fused.mu_t - truth.position
    rec.pos_error = float(np.linalg.norm(rec.pos_error_vec))
    rec.rot_error = geodesic_angle(rec.fused.mu_r, truth.attitude)
    svd = rec.fused.svd
    rec.eta = log_so3(svd.u.T @ truth.attitude @ svd.v)


def simulate_frame(pose: CameraPose, scene: Scene, cfg: PipelineConfig,
                   det_ss: np.random.SeedSequence, perm_ss: np.random.SeedSequence
                   ) -> tuple[DetectionSet, np.ndarray, float]:
    """Detector output (optionally query-shuffled), ground-truth labels and matched loss."""
    sim: SimulatedFrame = simulate(scene, cfg.intrinsics, pose, cfg.noise, np.random.default_rng(det_ss))
    ds = sim.detections
    if cfg.shuffle_queries:
        ds = misassign(ds, np.random.default_rng(perm_ss).permutation(ds.n_classes))
    match = hungarian_match(ds.probs, sim.c_g)
    loss = keypoint_loss(match, ds.probs, ds.keypoints, sim.c_g, sim.true_keypoints,
                         cfg.gamma, cfg.null_weight)
    return ds, sim.c_g, loss


def assemble_record(frame_id: int, pose: CameraPose, parts: list[PartPoseEstimate],
                    cfg: PipelineConfig, loss: float = math.nan, c_g=None) -> FrameRecord:
    """Fuse per-part estimates and score against the true pose; failures become gaps."""
    rec = FrameRecord(frame_id, pose, None, parts, loss=loss, c_g=c_g)
    try:
        rec.fused = fuse_estimates(parts, cfg)
    except NoInliers:
        rec.gap_reason = "no estimate passed the confidence gate" if parts else "no part estimated"
    score_frame(rec)
    return rec


def run_frame(frame_id: int, pose: CameraPose, scene: Scene, cfg: PipelineConfig,
              ss: np.random.SeedSequence) -> FrameRecord:
    det_ss, perm_ss, pnp_ss = stage_streams(ss)
    ds, c_g, loss = simulate_frame(pose, scene, cfg, det_ss, perm_ss)
    parts = estimate_parts(scene, cfg.intrinsics, ds, cfg, pnp_ss)
    return assemble_record(frame_id, pose, parts, cfg, loss, c_g)


def _run_chunk(args):
    ids, poses, scene, cfg, streams = args
    return [run_frame(i, p, scene, cfg, s) for i, p, s in zip(ids, poses, streams)]


def run_pipeline(scene: Scene, poses: list[CameraPose], cfg: PipelineConfig,
                 frame_ids: list[int] | None = None) -> list[FrameRecord]:
    """Evaluate every pose; a failed frame becomes a gap record, never an abort."""
    ids = list(range(len(poses))) if frame_ids is None else list(frame_ids)
    streams = frame_streams(cfg.seed, len(poses))
    workers = min(worker_count(cfg.workers), max(1, len(poses)))
    if workers == 1:
        return _run_chunk((ids, poses, scene, cfg, streams))
    chunks = [
        (ids[k::workers], poses[k::workers], scene, cfg, streams[k::workers]) for k in range(workers)
    ]
    records: list[FrameRecord] = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for chunk in pool.map(_run_chunk, chunks):
            records.extend(chunk)
    return sorted(records, key=lambda r: r.frame_id)


# ------------------------------------------------------------------ reporting


def part_errors(rec: FrameRecord, gate: float) -> dict[int, tuple[float, float]]:
    """Position and rotation error of each gated per-part estimate (first per class)."""
    out: dict[int, tuple[float, float]] = {}
    for est in rec.per_part:
        if est.confidence > gate and est.class_index not in out:
            pos = float(np.linalg.norm(est.camera_position - rec.true_pose.position))
            rot = geodesic_angle(est.camera_attitude, rec.true_pose.attitude)
            out[est.class_index] = (pos, rot)
    return out


def _stats(errors: list[float]) -> dict:
    if not errors:
        return {"n": 0, "mae": None, "max": None, "median": None}
    arr = np.asarray(errors)
    return {"n": len(arr), "mae": float(arr.mean()), "max": float(arr.max()),
            "median": float(np.median(arr))}


def ablate_single_object(records: list[FrameRecord], scene: Scene, gate: float = 0.9) -> list[dict]:
    """Per-class errors without fusion, plus the fused row last.

    A class's row covers only frames in which that class survived the gate;
    the remaining frames are counted as excluded.
    """
    rows = []
    for part in scene.parts:
        pos, rot = [], []
        for rec in records:
            e = part_errors(rec, gate).get(part.class_index)
            if e is not None:
                pos.append(e[0])
                rot.append(e[1])
        p, r = _stats(pos), _stats(np.degrees(rot).tolist())
        rows.append({
            "name": part.name,
            "class_index": part.class_index,
            "absent": p["n"] == 0,
            "n_frames": p["n"],
            "n_excluded": len(records) - p["n"],
            "mae_pos": p["mae"], "max_pos": p["max"], "median_pos": p["median"],
            "mae_rot_deg": r["mae"], "max_rot_deg": r["max"],
        })
    usable = [r for r in records if not r.is_gap]
    p = _stats([r.pos_error for r in usable])
    r = _stats(np.degrees([r.rot_error for r in usable]).tolist())
    rows.append({
        "name": "fused", "class_index": None, "absent": p["n"] == 0,
        "n_frames": p["n"], "n_excluded": len(records) - p["n"],
        "mae_pos": p["mae"], "max_pos": p["max"], "median_pos": p["median"],
        "mae_rot_deg": r["mae"], "max_rot_deg": r["max"],
    })
    return rows


def coverage_3sigma(records: list[FrameRecord], inflate: float = 1.0) -> dict:
    """Fraction of usable frames whose error lies inside the 3-sigma box.

    Position and rotation are reported separately; ``inflate`` scales both
    covariances before the check.
    """
    usable = [r for r in records if not r.is_gap]
    if not usable:
        return {"position": None, "rotation": None, "n": 0}
    pos_in = rot_in = 0
    for r in usable:
        sd_t = np.sqrt(np.clip(np.diag(r.fused.sigma_t) * inflate, 0.0, None))
        sd_e = np.sqrt(np.clip(np.diag(r.fused.sigma_eta) * inflate, 0.0, None))
        pos_in += bool(np.all(np.abs(r.pos_error_vec) <= 3.0 * sd_t))
        rot_in += bool(np.all(np.abs(r.eta) <= 3.0 * sd_e))
    return {"position": pos_in / len(usable), "rotation": rot_in / len(usable), "n": len(usable)}


def error_by_range(records: list[FrameRecord], edges) -> list[dict]:
    """Median fused position error per camera-range bin ``[edges[k], edges[k+1])``."""
    out = []
    usable = [r for r in records if not r.is_gap]
    for lo, hi in zip(edges[:-1], edges[1:]):
        errs = [r.pos_error for r in usable if lo <= r.range < hi]
        out.append({"lo": float(lo), "hi": float(hi), "n": len(errs),
                    "median_pos": float(np.median(errs)) if errs else None})
    return out


def build_report(records: list[FrameRecord], scene: Scene, cfg: PipelineConfig) -> dict:
    usable = [r for r in records if not r.is_gap]
    L = cfg.sampler.L_max
    report: dict = {
        "n_frames": len(records),
        "n_usable": len(usable),
        "n_gaps": len(records) - len(usable),
        "max_range_L": L,
        "mae_pos": None, "mae_rot_deg": None, "mae_over_L": None,
        "max_pos": None, "median_pos": None,
        "sigma_pos": None, "sigma_rot_deg": None, "mean_d": None,
        "mean_loss": float(np.mean([r.loss for r in records])) if records else None,
    }
    if usable:
        pos = np.array([r.pos_error for r in usable])
        rot = np.degrees([r.rot_error for r in usable])
        report.update(
            mae_pos=float(pos.mean()),
            mae_rot_deg=float(rot.mean()),
            mae_over_L=float(100.0 * pos.mean() / L),
            max_pos=float(pos.max()),
            median_pos=float(np.median(pos)),
            # norm of the per-axis standard deviations, averaged over frames
            sigma_pos=float(np.mean([np.sqrt(np.trace(r.fused.sigma_t)) for r in usable])),
            sigma_rot_deg=float(np.degrees(np.mean([np.sqrt(np.trace(r.fused.sigma_eta)) for r in usable]))),
            mean_d=float(np.mean([r.fused.scalar_d(cfg.fusion.scalar_d) for r in usable])),
        )
    report["coverage_3sigma"] = coverage_3sigma(records)
    report["per_part"] = ablate_single_object(records, scene, cfg.fusion.gate)
    return report
