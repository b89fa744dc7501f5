"""Camera-pose sampling for synthetic training-style data.

Camera position ``C`` and focus point ``F`` are drawn in spherical coordinates
about the base-frame origin; the attitude looks from ``C`` at ``F`` with a
level x-axis and a uniform roll about the line of sight.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .so3 import exp_so3

E3 = np.array([0.0, 0.0, 1.0])
MAX_RETRIES = 100


class DegenerateLookAt(ValueError):
    """Line of sight parallel to the vertical; the level x-axis is undefined."""


@dataclass(frozen=True)
class TruncNormal:
    mean: float
    std: float
    lo: float
    hi: float


@dataclass(frozen=True)
class SamplerConfig:
    # camera position
    L_max: float = 25.0
    camera_r: TruncNormal = TruncNormal(1.0, 40.0, 0.0, 25.0)
    camera_theta: tuple[float, float] = (-np.pi, 0.0)
    phi_max: float = np.pi / 3
    # focus point
    focus_r: TruncNormal = TruncNormal(0.0, 1.0, 0.0, 15.0)
    focus_theta: tuple[float, float] = (0.0, 2 * np.pi)
    focus_phi: tuple[float, float] = (-np.pi / 2, np.pi / 2)
    # roll about the line of sight
    psi_max: float = np.pi / 6
    seed: int = 0

    def __post_init__(self):
        # L_max is the upper truncation of the camera range
        if self.camera_r.hi != self.L_max:
            r = self.camera_r
            object.__setattr__(self, "camera_r", TruncNormal(r.mean, r.std, r.lo, self.L_max))


@dataclass(frozen=True)
class CameraPose:
    """Camera position in the base frame and camera-to-base attitude."""

    position: np.ndarray
    attitude: np.ndarray


def truncnorm_ppf(u, mean: float, std: float, lo: float, hi: float):
    """Inverse CDF of a normal restricted to ``[lo, hi]``."""
    a = ndtr((lo - mean) / std)
    b = ndtr((hi - mean) / std)
    x = mean + std * ndtri(a + np.asarray(u) * (b - a))
    return np.clip(x, lo, hi)


def truncnorm_cdf(x, mean: float, std: float, lo: float, hi: float):
    a = ndtr((lo - mean) / std)
    b = ndtr((hi - mean) / std)
    x = np.clip(np.asarray(x, dtype=float), lo, hi)
    return (ndtr((x - mean) / std) - a) / (b - a)


def sample_truncated_normal(mean: float, std: float, lo: float, hi: float,
                            rng: np.random.Generator) -> float:
    if not lo < hi or std <= 0:
        raise ValueError("need lo < hi and std > 0")
    return float(truncnorm_ppf(rng.random(), mean, std, lo, hi))


def spherical_to_cartesian(r: float, theta: float, phi: float) -> np.ndarray:
    """Azimuth ``theta`` from +x toward +y, elevation ``phi`` from the deck plane."""
    return r * np.array([np.cos(phi) * np.cos(theta), np.cos(phi) * np.sin(theta), np.sin(phi)])


def _sample_point(rng, tn: TruncNormal, theta_rng, phi_rng) -> np.ndarray:
    # fixed draw order keeps seeded streams stable: theta, phi, r
    theta = rng.uniform(*theta_rng)
    phi = rng.uniform(*phi_rng)
    r = sample_truncated_normal(tn.mean, tn.std, tn.lo, tn.hi, rng)
    return spherical_to_cartesian(r, theta, phi)


def sample_camera_position(rng: np.random.Generator, cfg: SamplerConfig = SamplerConfig()) -> np.ndarray:
    return _sample_point(rng, cfg.camera_r, cfg.camera_theta, (0.0, cfg.phi_max))


def sample_focus_point(rng: np.random.Generator, cfg: SamplerConfig = SamplerConfig()) -> np.ndarray:
    return _sample_point(rng, cfg.focus_r, cfg.focus_theta, cfg.focus_phi)


def lookat_attitude(c, f, psi: float) -> np.ndarray:
    """Camera attitude whose -z axis points from ``c`` to ``f``, rolled by ``psi``.

    Raises:
        DegenerateLookAt: if the line of sight is (nearly) vertical.
    """
    c = np.asarray(c, dtype=float)
    f = np.asarray(f, dtype=float)
    los = f - c
    n = np.linalg.norm(los)
    if n == 0.0:
        raise DegenerateLookAt("camera and focus point coincide")
    r3 = -los / n
    x = np.cross(E3, r3)
    nx = np.linalg.norm(x)
    if nx < 1e-9:
        raise DegenerateLookAt("line of sight is vertical")
    r1 = x / nx
    r2 = np.cross(r3, r1)
    r_prime = np.column_stack([r1, r2, r3])
    return r_prime @ exp_so3(psi * E3)


def roll_angle(attitude: np.ndarray) -> float:
    """Recover the roll ``psi`` of a look-at attitude.

    The unrolled x-axis is horizontal and orthogonal to the optical axis, so
    the roll is the angle of that axis in the camera's own x-y plane.
    """
    r3 = attitude[:, 2]
    x = np.cross(E3, r3)
    x /= np.linalg.norm(x)
    # x expressed in camera coordinates is (cos psi, -sin psi, 0)
    xc = attitude.T @ x
    return float(np.arctan2(-xc[1], xc[0]))


def sample_pose(rng: np.random.Generator, cfg: SamplerConfig = SamplerConfig()) -> CameraPose:
    for _ in range(MAX_RETRIES):
        c = sample_camera_position(rng, cfg)
        f = sample_focus_point(rng, cfg)
        psi = rng.uniform(-cfg.psi_max, cfg.psi_max)
        try:
            return CameraPose(c, lookat_attitude(c, f, psi))
        except DegenerateLookAt:
            continue
    raise RuntimeError(f"no valid (C, F) pair after {MAX_RETRIES} draws")


def sample_poses(n: int, cfg: SamplerConfig = SamplerConfig(),
                 rng: np.random.Generator | None = None) -> list[CameraPose]:
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    return [sample_pose(rng, cfg) for _ in range(n)]
