"""Reusable experiment drivers shared by the scripts and the acceptance suite."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import DEFAULT_INTRINSICS, CameraIntrinsics, project
from .epnp import EstimationFailed, RansacConfig, estimate_pose
from .fusion import quantile_for_d
from .sampler import CameraPose, SamplerConfig, sample_pose
from .scene import Scene, default_scene

UQ_D = (0.9, 0.99, 0.999)
UQ_P = (0.5, 0.9, 0.95, 0.99)


def uq_grid(d_values=UQ_D, p_values=UQ_P) -> np.ndarray:
    """Attitude-error quantiles in degrees, rows indexed by ``d`` and columns by ``p``."""
    return np.array([[np.degrees(quantile_for_d(d, p)) for p in p_values] for d in d_values])


@dataclass
class OutlierTrials:
    pose: CameraPose             # last (or the fixed) trial geometry
    part: str
    clean_error: np.ndarray      # camera-position error without outliers (m)
    outlier_error: np.ndarray    # same trials with outliers injected (m); inf on failure
    n_outliers: int

    @property
    def clean_median(self) -> float:
        return float(np.median(self.clean_error))

    def success_rate(self, factor: float = 5.0) -> float:
        return float(np.mean(self.outlier_error <= factor * self.clean_median))


def pnp_outlier_trials(n_trials: int = 500, outlier_fraction: float = 0.25, sigma: float = 1.0,
                       seed: int = 0, scene: Scene | None = None,
                       intr: CameraIntrinsics = DEFAULT_INTRINSICS,
                       ransac: RansacConfig = RansacConfig(),
                       fixed_geometry: bool = True) -> OutlierTrials:
    """RANSAC-EPnP with and without gross outliers on the same noisy keypoints.

    A trial picks a camera pose and a part whose 32 keypoints all lie in the
    image, adds isotropic pixel noise and replaces a fixed fraction of the
    points with uniform image positions. With ``fixed_geometry`` the pose and
    part are drawn once and only noise, outliers and RANSAC vary, so the
    noise-only median describes a single error distribution; otherwise every
    trial draws a new pose.
    """
    scene = scene or default_scene()
    rng = np.random.default_rng(seed)
    n_out = int(round(outlier_fraction * 32))
    clean, dirty = [], []
    geometry = None
    while len(clean) < n_trials:
        if geometry is None or not fixed_geometry:
            pose = sample_pose(rng, SamplerConfig())
            candidates = [p for p in scene.parts if project(intr, pose, p.keypoints3d).valid.all()]
            if not candidates:
                continue
            geometry = (pose, candidates[rng.integers(len(candidates))])
        pose, part = geometry
        uv = project(intr, pose, part.keypoints3d).pts + sigma * rng.standard_normal((32, 2))
        bad = rng.choice(32, size=n_out, replace=False)
        uv_bad = uv.copy()
        uv_bad[bad] = rng.random((n_out, 2)) * [intr.width, intr.height]
        valid = np.ones(32, dtype=bool)
        pnp_ss = np.random.SeedSequence(rng.integers(2**63))
        errs = []
        for pts in (uv, uv_bad):
            try:
                est = estimate_pose(part.keypoints3d, pts, valid, intr, ransac,
                                    np.random.default_rng(pnp_ss))
                errs.append(float(np.linalg.norm(est.camera_position - pose.position)))
            except EstimationFailed:
                errs.append(np.inf)
        clean.append(errs[0])
        dirty.append(errs[1])
    return OutlierTrials(pose, part.name, np.array(clean), np.array(dirty), n_out)
