"""Pinhole camera with +z opposite to the line of sight and +y up.

Pixel rows grow downward, so the image v-axis is flipped relative to the
camera y-axis.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .sampler import CameraPose

MIN_DEPTH = 1e-6


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int = 640
    height: int = 480

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0 or self.width <= 0 or self.height <= 0:
            raise ValueError("focal lengths and image size must be positive")

    @classmethod
    def from_fov(cls, hfov_deg: float = 60.0, width: int = 640, height: int = 480) -> "CameraIntrinsics":
        f = (width / 2) / np.tan(np.radians(hfov_deg) / 2)
        return cls(f, f, (width - 1) / 2, (height - 1) / 2, width, height)

    @property
    def matrix(self) -> np.ndarray:
        """Standard-convention K (row index down, depth along the line of sight)."""
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                   int(d.get("width", 640)), int(d.get("height", 480)))


DEFAULT_INTRINSICS = CameraIntrinsics.from_fov()


@dataclass(frozen=True)
class Keypoints2D:
    pts: np.ndarray
    in_image: np.ndarray
    in_front: np.ndarray

    @property
    def valid(self) -> np.ndarray:
        return self.in_front & self.in_image


def to_camera_frame(pose: CameraPose, pts3d: np.ndarray) -> np.ndarray:
    return (np.asarray(pts3d, dtype=float) - pose.position) @ pose.attitude


def project_camera_points(intr: CameraIntrinsics, pc: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    depth = -pc[:, 2]
    in_front = depth > MIN_DEPTH
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intr.fx * (pc[:, 0] / depth) + intr.cx
        v = intr.cy - intr.fy * (pc[:, 1] / depth)
    return np.column_stack([u, v]), in_front


def project(intr: CameraIntrinsics, pose: CameraPose, pts3d: np.ndarray) -> Keypoints2D:
    """Project base-frame points; behind-camera points keep meaningless pixels."""
    pts, in_front = project_camera_points(intr, to_camera_frame(pose, pts3d))
    u, v = pts[:, 0], pts[:, 1]
    in_image = in_front & (u >= 0) & (u < intr.width) & (v >= 0) & (v < intr.height)
    return Keypoints2D(pts, in_image, in_front)


def back_project(intr: CameraIntrinsics, pose: CameraPose, uv: np.ndarray, depth: np.ndarray) -> np.ndarray:
    """Base-frame points at the given depths along the rays of ``uv``."""
    uv = np.atleast_2d(uv)
    depth = np.asarray(depth, dtype=float).reshape(-1)
    x = (uv[:, 0] - intr.cx) / intr.fx * depth
    y = (intr.cy - uv[:, 1]) / intr.fy * depth
    pc = np.column_stack([x, y, -depth])
    return pc @ pose.attitude.T + pose.position


def part_visible(kp: Keypoints2D, min_fraction: float = 0.5) -> bool:
    return bool(np.mean(kp.in_front & kp.in_image) >= min_fraction)
