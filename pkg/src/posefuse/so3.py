"""Rotation-group primitives on SO(3).

Rotations are plain ``(3, 3)`` float arrays; axis-angle vectors are ``(3,)``
arrays whose norm is the rotation angle in radians.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROTATION_TOL = 1e-9
_SMALL_ANGLE = 1e-8


def hat(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix with ``hat(v) @ w == cross(v, w)``."""
    x, y, z = (float(c) for c in v)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(m: np.ndarray) -> np.ndarray:
    """Inverse of :func:`hat`; reads the off-diagonal entries directly."""
    return np.array([m[2, 1], m[0, 2], m[1, 0]], dtype=float)


def exp_so3(v: np.ndarray) -> np.ndarray:
    """Rodrigues formula. Below 1e-8 rad a second-order Taylor expansion is used."""
    v = np.asarray(v, dtype=float)
    theta = float(np.linalg.norm(v))
    k = hat(v)
    if theta < _SMALL_ANGLE:
        return np.eye(3) + k + 0.5 * (k @ k)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * k + b * (k @ k)


def log_so3(r: np.ndarray) -> np.ndarray:
    """Rotation vector of ``r`` with norm in ``[0, pi]``.

    Near the cut locus the axis comes from the dominant eigenvector of
    ``(R + R^T)/2 - I`` with its largest-magnitude component made positive.
    """
    r = np.asarray(r, dtype=float)
    skew = vee(r - r.T) / 2.0  # = sin(theta) * axis
    theta = float(np.arctan2(np.linalg.norm(skew), (np.trace(r) - 1.0) / 2.0))
    if theta < _SMALL_ANGLE:
        return skew
    if np.pi - theta > 1e-4:
        return skew * (theta / np.sin(theta))
    # (R + R^T)/2 - I = (1 - cos) (a a^T - I): dominant eigenvector is the axis.
    sym = (r + r.T) / 2.0 - np.eye(3)
    w, vecs = np.linalg.eigh(sym)
    axis = vecs[:, int(np.argmax(w))]
    if np.linalg.norm(skew) > 1e-12:
        # the skew part still carries the sign just short of pi
        axis = axis if float(axis @ skew) >= 0.0 else -axis
    else:
        axis = _canonical_sign(axis)
    return theta * axis / np.linalg.norm(axis)


def _canonical_sign(axis: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(axis)))
    return axis if axis[i] >= 0 else -axis


@dataclass(frozen=True)
class ProperSvd:
    """``m = u @ diag(d) @ v.T`` with ``u, v`` in SO(3)."""

    u: np.ndarray
    d: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.u @ np.diag(self.d) @ self.v.T


def proper_svd(m: np.ndarray) -> ProperSvd:
    """SVD with determinant-corrected factors.

    The sign flip lands on the last column of each factor and on the smallest
    singular value, so ``d[0] >= d[1] >= |d[2]|``.
    """
    m = np.asarray(m, dtype=float)
    u_, d_, vt_ = np.linalg.svd(m)
    v_ = vt_.T
    det_u = np.sign(np.linalg.det(u_))
    det_v = np.sign(np.linalg.det(v_))
    u = u_ @ np.diag([1.0, 1.0, det_u])
    v = v_ @ np.diag([1.0, 1.0, det_v])
    d = d_ * np.array([1.0, 1.0, det_u * det_v])
    return ProperSvd(u=u, d=d, v=v)


def project_to_so3(m: np.ndarray) -> np.ndarray:
    """Nearest rotation in the Frobenius sense."""
    svd = proper_svd(m)
    return svd.u @ svd.v.T


def is_rotation(m: np.ndarray, tol: float = ROTATION_TOL) -> bool:
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        return False
    ortho = np.linalg.norm(m.T @ m - np.eye(3))
    return bool(ortho <= tol and abs(np.linalg.det(m) - 1.0) <= tol)


def as_rotation(m: np.ndarray, tol: float = ROTATION_TOL) -> np.ndarray:
    """Return ``m`` if it is a valid rotation, otherwise its re-projection onto SO(3)."""
    m = np.asarray(m, dtype=float)
    return m if is_rotation(m, tol) else project_to_so3(m)


def geodesic_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Angle of the relative rotation ``a^T b`` in radians."""
    return float(np.linalg.norm(log_so3(np.asarray(a).T @ np.asarray(b))))


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Haar-uniform rotation from a normalized Gaussian quaternion."""
    q = rng.standard_normal(4)
    w, x, y, z = q / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )
