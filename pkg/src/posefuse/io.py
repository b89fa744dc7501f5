"""File formats: pose CSV, per-frame detection/estimate/fusion JSON, reports."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

from .detector import DetectionSet
from .epnp import PartPoseEstimate
from .fusion import FusedPose
from .sampler import CameraPose
from .so3 import as_rotation

POSE_COLUMNS = ["frame_id", "cx", "cy", "cz"] + [f"r{i}{j}" for i in range(3) for j in range(3)]


class FormatError(ValueError):
    pass


def _clean(x):
    """Recursively convert numpy values to JSON-safe python; NaN becomes null."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return None if not math.isfinite(x) else x
    return x


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, NaN written as null."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path: str | Path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc


# ------------------------------------------------------------------- poses


def write_poses(dest: str | Path | TextIO, poses: list[CameraPose], frame_ids=None,
                timestamps=None) -> None:
    """Write a pose CSV to a path or an open text stream."""
    if not hasattr(dest, "write"):
        with open(dest, "w", newline="") as fh:
            write_poses(fh, poses, frame_ids, timestamps)
        return
    ids = range(len(poses)) if frame_ids is None else frame_ids
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(POSE_COLUMNS + (["timestamp"] if timestamps is not None else []))
    for k, (i, p) in enumerate(zip(ids, poses)):
        row = [int(i)] + [repr(float(v)) for v in p.position] + [repr(float(v)) for v in p.attitude.ravel()]
        if timestamps is not None:
            row.append(repr(float(timestamps[k])))
        w.writerow(row)


def read_poses(path: str | Path) -> tuple[list[int], list[CameraPose], list[float] | None]:
    """Read a pose CSV; an optional ``timestamp`` column is passed through."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    ids, poses, stamps = [], [], []
    for n, row in enumerate(rows):
        try:
            c = np.array([float(row[k]) for k in ("cx", "cy", "cz")])
            r = np.array([float(row[f"r{i}{j}"]) for i in range(3) for j in range(3)]).reshape(3, 3)
            ids.append(int(row["frame_id"]))
            poses.append(CameraPose(c, as_rotation(r, tol=1e-6)))
            if "timestamp" in row and row["timestamp"] not in (None, ""):
                stamps.append(float(row["timestamp"]))
        except (KeyError, ValueError, TypeError) as exc:
            raise FormatError(f"{path}: bad pose row {n + 1}: {exc}") from exc
    return ids, poses, (stamps if len(stamps) == len(poses) and stamps else None)


# -------------------------------------------------------------- detections


def detections_to_dict(frame_id: int, ds: DetectionSet) -> dict:
    return {"frame_id": int(frame_id), "probs": ds.probs, "keypoints": ds.keypoints}


def detections_from_dict(data: dict) -> tuple[int, DetectionSet]:
    try:
        probs = np.asarray(data["probs"], dtype=float)
        # null (behind the camera) becomes NaN
        kp = np.array(data["keypoints"], dtype=float)
        return int(data["frame_id"]), DetectionSet(probs, kp)
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"bad detections record: {exc}") from exc


# --------------------------------------------------------------- estimates


def estimates_to_dict(frame_id: int, estimates: Iterable[PartPoseEstimate]) -> dict:
    return {
        "frame_id": int(frame_id),
        "parts": [
            {
                "class_index": int(e.class_index),
                "query": int(e.query),
                "confidence": float(e.confidence),
                "R": e.rotation.ravel(),
                "t": e.translation,
                "inliers": int(np.count_nonzero(e.inliers)),
                "reproj_px": float(e.reproj_error),
            }
            for e in estimates
        ],
    }


def estimates_from_dict(data: dict) -> tuple[int, list[PartPoseEstimate]]:
    out = []
    try:
        for p in data["parts"]:
            out.append(PartPoseEstimate(
                rotation=np.asarray(p["R"], dtype=float).reshape(3, 3),
                translation=np.asarray(p["t"], dtype=float),
                inliers=np.ones(int(p["inliers"]), dtype=bool),
                reproj_error=float(p["reproj_px"]),
                class_index=int(p["class_index"]),
                confidence=float(p["confidence"]),
                query=int(p.get("query", -1)),
            ))
        return int(data["frame_id"]), out
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"bad estimates record: {exc}") from exc


# ------------------------------------------------------------------- fused


def fused_to_dict(frame_id: int, fused: FusedPose | None, gap_reason: str = "") -> dict:
    if fused is None:
        return {"frame_id": int(frame_id), "gap": True, "reason": gap_reason}
    return {
        "frame_id": int(frame_id),
        "mu_t": fused.mu_t,
        "sigma_t": fused.sigma_t.ravel(),
        "mu_r": fused.mu_r.ravel(),
        "d": fused.d,
        "sigma_eta": fused.sigma_eta.ravel(),
        "n_inliers": fused.n_inliers,
        "weights": fused.weights,
    }


# ------------------------------------------------------------------ report


FRAME_COLUMNS = ["frame_id", "range", "gap", "pos_error", "rot_error_deg",
                 "ex", "ey", "ez", "eta_x", "eta_y", "eta_z",
                 "sd_x", "sd_y", "sd_z", "sd_eta_x", "sd_eta_y", "sd_eta_z", "n_parts", "loss"]


def write_frame_csv(path: str | Path, records) -> None:
    """Per-frame errors and 1-sigma bounds for external plotting."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FRAME_COLUMNS)
        for r in records:
            if r.is_gap:
                vals = [math.nan] * 14 + [0]
            else:
                sd_t = np.sqrt(np.clip(np.diag(r.fused.sigma_t), 0, None))
                sd_e = np.sqrt(np.clip(np.diag(r.fused.sigma_eta), 0, None))
                vals = [r.pos_error, math.degrees(r.rot_error), *r.pos_error_vec, *r.eta,
                        *sd_t, *sd_e, r.fused.n_inliers]
            row = [r.frame_id, r.range, int(r.is_gap), *vals, r.loss]
            w.writerow(["" if isinstance(v, float) and not math.isfinite(v) else
                        (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for v in row])
