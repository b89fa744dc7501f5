"""Parametric stand-in for the keypoint detector.

Produces the same outputs as the network at inference time: an N x N
row-stochastic class-probability matrix (one row per object query) and a
32 x 2 keypoint array per query. Query ``j`` carries part ``j``; the last
query always reports the no-object class.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraIntrinsics, part_visible, project
from .sampler import CameraPose
from .scene import N_KEYPOINTS, Scene, ground_truth_labels


@dataclass(frozen=True)
class NoiseConfig:
    pixel_sigma: float = 2.0
    # visible-part confidence = floor + (1 - floor) * Beta(alpha, beta)
    confidence_alpha: float = 8.0
    confidence_beta: float = 1.0
    confidence_floor: float = 0.85
    # no-object confidence ~ U[null_confidence_min, 1]
    null_confidence_min: float = 0.95
    dropout_prob: float = 0.0
    min_visible_fraction: float = 0.5
    # drop parts whose projected box diagonal is below min_diag_px
    range_dropout: bool = True
    min_diag_px: float = 150.0
    # report keypoints that project outside the image (a regressor can extrapolate them)
    keep_out_of_image: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.pixel_sigma < 0:
            raise ValueError("pixel_sigma must be non-negative")
        for name in ("confidence_floor", "null_confidence_min", "dropout_prob", "min_visible_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class DetectionSet:
    probs: np.ndarray
    keypoints: np.ndarray  # (N, 32, 2); NaN where the point is behind the camera

    @property
    def n_classes(self) -> int:
        return self.probs.shape[0]


@dataclass(frozen=True)
class SimulatedFrame:
    """Detector output plus the ground truth it was generated from."""

    detections: DetectionSet
    c_g: np.ndarray
    true_keypoints: np.ndarray  # (N, 32, 2); NaN for the no-object slot
    visible: np.ndarray
    detected: np.ndarray


def _peaked_row(n: int, peak: int, conf: float, rng: np.random.Generator) -> np.ndarray:
    rest = rng.dirichlet(np.ones(n - 1)) * (1.0 - conf)
    row = np.insert(rest, peak, conf)
    return row / row.sum()


def bbox_diagonal(pts: np.ndarray) -> float:
    ext = np.nanmax(pts, axis=0) - np.nanmin(pts, axis=0)
    return float(np.hypot(*ext))


def simulate(scene: Scene, intr: CameraIntrinsics, true_pose: CameraPose,
             cfg: NoiseConfig, rng: np.random.Generator) -> SimulatedFrame:
    n = scene.n_classes
    null = scene.no_object_index
    probs = np.zeros((n, n))
    keypoints = np.full((n, N_KEYPOINTS, 2), np.nan)
    true_kp = np.full((n, N_KEYPOINTS, 2), np.nan)
    visible = np.zeros(n - 1, dtype=bool)
    detected = np.zeros(n - 1, dtype=bool)

    for j, part in enumerate(scene.parts):
        kp = project(intr, true_pose, part.keypoints3d)
        visible[j] = part_visible(kp, cfg.min_visible_fraction)
        # draws happen unconditionally so the stream does not depend on outcomes
        noise = rng.standard_normal((N_KEYPOINTS, 2))
        drop_u = rng.random()
        conf_u = rng.beta(cfg.confidence_alpha, cfg.confidence_beta)
        null_u = rng.random()

        pts = np.where(kp.in_front[:, None], kp.pts, np.nan)
        true_kp[j] = pts
        reported = kp.in_front if cfg.keep_out_of_image else kp.valid
        keypoints[j] = np.where(reported[:, None], pts + cfg.pixel_sigma * noise, np.nan)

        keep = visible[j] and drop_u >= cfg.dropout_prob
        if keep and cfg.range_dropout:
            keep = bbox_diagonal(pts[kp.in_front]) >= cfg.min_diag_px
        detected[j] = keep
        if keep:
            conf = cfg.confidence_floor + (1.0 - cfg.confidence_floor) * conf_u
            probs[j] = _peaked_row(n, j, conf, rng)
        else:
            conf = cfg.null_confidence_min + (1.0 - cfg.null_confidence_min) * null_u
            probs[j] = _peaked_row(n, null, conf, rng)

    conf = cfg.null_confidence_min + (1.0 - cfg.null_confidence_min) * rng.random()
    probs[null] = _peaked_row(n, null, conf, rng)
    keypoints[null] = 0.0

    c_g = ground_truth_labels(n, visible)
    return SimulatedFrame(DetectionSet(probs, keypoints), c_g, true_kp, visible, detected)


def misassign(ds: DetectionSet, permutation) -> DetectionSet:
    """Reorder queries: output row ``i`` is input row ``permutation[i]``."""
    perm = np.asarray(permutation, dtype=int)
    if sorted(perm.tolist()) != list(range(ds.n_classes)):
        raise ValueError("not a permutation")
    return DetectionSet(ds.probs[perm].copy(), ds.keypoints[perm].copy())


def random_permutation(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(n)
