"""EPnP pose recovery and a RANSAC wrapper over it.

Poses follow the camera convention used everywhere else in the package:
``p_c = R @ p + t`` maps base-frame points into the camera frame whose +z
axis points away from the scene. Internally the solver works in the usual
computer-vision frame (depth along +z, image y down), which differs from the
camera frame by ``diag(1, -1, -1)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

import numpy as np

from .camera import CameraIntrinsics
from .so3 import project_to_so3

log = logging.getLogger(__name__)

_CV_FLIP = np.diag([1.0, -1.0, -1.0])
_PLANAR_TOL = 1e-6
_GN_ITERS = 10
_GN_STEP_TOL = 1e-12


class PnPError(ValueError):
    pass


class InsufficientPoints(PnPError):
    pass


class DegenerateGeometry(PnPError):
    pass


class EstimationFailed(PnPError):
    pass


@dataclass(frozen=True)
class RansacConfig:
    max_iterations: int = 200
    inlier_threshold: float = 4.0
    min_inliers: int = 12
    sample_size: int = 6
    confidence: float = 0.999
    seed: int = 0

    def __post_init__(self):
        if self.sample_size < 4:
            raise ValueError("sample_size must be at least 4")
        if self.min_inliers < self.sample_size:
            raise ValueError("min_inliers must be >= sample_size")


@dataclass
class PartPoseEstimate:
    rotation: np.ndarray
    translation: np.ndarray
    inliers: np.ndarray
    reproj_error: float
    class_index: int = -1
    confidence: float = 0.0
    query: int = -1
    iterations: int = field(default=0, repr=False)

    @property
    def camera_position(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    @property
    def camera_attitude(self) -> np.ndarray:
        """Camera-to-base rotation."""
        return self.rotation.T


# --------------------------------------------------------------------------- EPnP


def _control_points(pw: np.ndarray) -> np.ndarray:
    c0 = pw.mean(axis=0)
    centered = pw - c0
    w, vecs = np.linalg.eigh(centered.T @ centered / len(pw))
    w = np.clip(w[::-1], 0.0, None)
    vecs = vecs[:, ::-1]
    ext = np.sqrt(w)
    if ext[1] < _PLANAR_TOL * max(ext[0], 1.0):
        raise DegenerateGeometry("3D points are collinear")
    n_axes = 2 if ext[2] < _PLANAR_TOL else 3
    return np.vstack([c0] + [c0 + ext[k] * vecs[:, k] for k in range(n_axes)])


def _barycentric(pw: np.ndarray, cw: np.ndarray) -> np.ndarray:
    basis = (cw[1:] - cw[0]).T  # 3 x (nc - 1)
    rel = (pw - cw[0]).T
    coeffs = np.linalg.lstsq(basis, rel, rcond=None)[0].T
    return np.column_stack([1.0 - coeffs.sum(axis=1), coeffs])


def _build_m(alphas: np.ndarray, xn: np.ndarray) -> np.ndarray:
    n, nc = alphas.shape
    m = np.zeros((2 * n, 3 * nc))
    for j in range(nc):
        a = alphas[:, j]
        m[0::2, 3 * j] = a
        m[0::2, 3 * j + 2] = -a * xn[:, 0]
        m[1::2, 3 * j + 1] = a
        m[1::2, 3 * j + 2] = -a * xn[:, 1]
    return m


@lru_cache(maxsize=None)
def _pair_index(nc: int) -> tuple[np.ndarray, np.ndarray]:
    ia, ib = zip(*combinations(range(nc), 2))
    return np.array(ia), np.array(ib)


def _kernel_diffs(kernel: np.ndarray, nc: int, ia, ib) -> np.ndarray:
    """Per-pair control-point differences of each kernel vector, shape (k, pairs, 3)."""
    v = kernel.T.reshape(kernel.shape[1], nc, 3)
    return v[:, ia] - v[:, ib]


def _initial_betas(kernel: np.ndarray, cw: np.ndarray, k: int) -> np.ndarray | None:
    """Linearized beta estimate from the preserved control-point distances.

    Unknowns are the products ``b_a * b_b`` (a <= b); the first beta comes
    from the square term and the rest from the cross terms with it.
    """
    nc = len(cw)
    ia, ib = _pair_index(nc)
    prods = [(a, b) for a in range(k) for b in range(a, k)]
    if len(prods) > len(ia):
        return None
    dv = _kernel_diffs(kernel, nc, ia, ib)
    lmat = np.column_stack(
        [np.sum(dv[a] * dv[b], axis=1) * (1.0 if a == b else 2.0) for a, b in prods]
    )
    rho = np.sum((cw[ia] - cw[ib]) ** 2, axis=1)
    sol = np.linalg.lstsq(lmat, rho, rcond=None)[0]
    b11 = sol[0]
    betas = np.zeros(k)
    betas[0] = math.sqrt(abs(b11))
    if betas[0] == 0.0:
        return None
    for a in range(1, k):
        betas[a] = sol[prods.index((0, a))] / betas[0]
    return -betas if b11 < 0 else betas


def _gauss_newton(kernel: np.ndarray, cw: np.ndarray, betas: np.ndarray) -> np.ndarray:
    nc = len(cw)
    ia, ib = _pair_index(nc)
    dv = _kernel_diffs(kernel, nc, ia, ib)
    k, n_pairs = dv.shape[:2]
    dv_flat = dv.reshape(k, -1)
    target = np.sum((cw[ia] - cw[ib]) ** 2, axis=1)
    for _ in range(_GN_ITERS):
        d = (betas @ dv_flat).reshape(n_pairs, 3)
        res = np.einsum("pc,pc->p", d, d) - target
        jac = 2.0 * np.einsum("pc,kpc->pk", d, dv)
        jtj = jac.T @ jac
        if k == 1:
            if jtj[0, 0] == 0.0:
                break
            step = -(jac[:, 0] @ res) / jtj[0]
        else:
            try:
                step = np.linalg.solve(jtj, -(jac.T @ res))
            except np.linalg.LinAlgError:
                break
        betas = betas + step
        if np.max(np.abs(step)) < _GN_STEP_TOL * (1.0 + np.max(np.abs(betas))):
            break
    return betas


def _rigid_align(pw: np.ndarray, pc: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares ``R, t`` with ``pc ~ R @ pw + t``."""
    mw = pw.mean(axis=0)
    mc = pc.mean(axis=0)
    h = (pc - mc).T @ (pw - mw)
    r = project_to_so3(h)
    return r, mc - r @ mw


def _reproj_errors_cv(r: np.ndarray, t: np.ndarray, pw: np.ndarray, xn: np.ndarray,
                      focal: np.ndarray) -> np.ndarray:
    pc = pw @ r.T + t
    z = pc[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        proj = pc[:, :2] / z[:, None]
    err = np.linalg.norm((proj - xn) * focal, axis=1)
    return np.where(z > 0, err, np.inf)


def _epnp_cv(pw: np.ndarray, xn: np.ndarray, focal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cw = _control_points(pw)
    nc = len(cw)
    alphas = _barycentric(pw, cw)
    m = _build_m(alphas, xn)
    _, _, vt = np.linalg.svd(m.T @ m)
    kernel_all = vt[::-1].T  # columns ordered by increasing singular value

    # refinement runs over the full kernel (one vector per control point),
    # started from each linearized estimate padded with zeros
    n_full = nc
    full = kernel_all[:, :n_full]
    best = None
    for k in (1, 2, 3):
        kernel = kernel_all[:, :k]
        betas = _initial_betas(kernel, cw, k)
        if betas is None:
            continue
        candidates = [(kernel, _gauss_newton(kernel, cw, betas))]
        if k < n_full:
            padded = np.concatenate([betas, np.zeros(n_full - k)])
            candidates.append((full, _gauss_newton(full, cw, padded)))
        for basis, b in candidates:
            pc = alphas @ (basis @ b).reshape(nc, 3)
            if np.sum(pc[:, 2] < 0) > len(pc) / 2:
                pc = -pc
            r, t = _rigid_align(pw, pc)
            err = float(np.mean(_reproj_errors_cv(r, t, pw, xn, focal)))
            if best is None or err < best[0]:
                best = (err, r, t)
    if best is None:
        raise DegenerateGeometry("no valid EPnP solution")
    return best[1], best[2]


def _normalize(pts2d: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    return np.column_stack([(pts2d[:, 0] - intr.cx) / intr.fx, (pts2d[:, 1] - intr.cy) / intr.fy])


def epnp(pts3d, pts2d, intr: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Pose ``(R, t)`` from at least four 2D-3D correspondences.

    Raises:
        InsufficientPoints: fewer than 4 correspondences.
        DegenerateGeometry: collinear 3D points.
    """
    pw = np.asarray(pts3d, dtype=float)
    uv = np.asarray(pts2d, dtype=float)
    if len(pw) < 4 or len(pw) != len(uv):
        raise InsufficientPoints(f"need >= 4 correspondences, got {len(pw)}")
    focal = np.array([intr.fx, intr.fy])
    r_cv, t_cv = _epnp_cv(pw, _normalize(uv, intr), focal)
    return _CV_FLIP @ r_cv, _CV_FLIP @ t_cv


def reprojection_errors(rotation, translation, pts3d, pts2d, intr: CameraIntrinsics) -> np.ndarray:
    """Pixel distance between observed and reprojected points (inf behind the camera)."""
    r_cv = _CV_FLIP @ rotation
    t_cv = _CV_FLIP @ translation
    return _reproj_errors_cv(r_cv, t_cv, np.asarray(pts3d, float),
                             _normalize(np.asarray(pts2d, float), intr),
                             np.array([intr.fx, intr.fy]))


# ------------------------------------------------------------------------- RANSAC


def _required_iterations(inlier_ratio: float, sample_size: int, confidence: float) -> float:
    good = inlier_ratio ** sample_size
    if good >= 1.0:
        return 0.0
    if good <= 0.0:
        return math.inf
    return math.log(1.0 - confidence) / math.log(1.0 - good)


def estimate_pose(pts3d, pts2d, valid, intr: CameraIntrinsics, cfg: RansacConfig,
                  rng: np.random.Generator) -> PartPoseEstimate:
    """RANSAC over EPnP minimal samples followed by a refit on the consensus set.

    Stops early once the consensus size makes further sampling unnecessary at
    ``cfg.confidence``.

    Raises:
        EstimationFailed: fewer than ``cfg.min_inliers`` usable points or no
            hypothesis reaches that many inliers.
    """
    pts3d = np.asarray(pts3d, dtype=float)
    pts2d = np.asarray(pts2d, dtype=float)
    valid = np.asarray(valid, dtype=bool) & np.all(np.isfinite(pts2d), axis=1)
    idx = np.flatnonzero(valid)
    if len(idx) < cfg.min_inliers:
        raise EstimationFailed(f"{len(idx)} usable points < min_inliers={cfg.min_inliers}")
    pw, uv = pts3d[idx], pts2d[idx]

    best_mask = None
    best_key = (-1, math.inf)
    needed = float(cfg.max_iterations)
    it = 0
    while it < min(cfg.max_iterations, needed):
        it += 1
        sample = rng.choice(len(idx), size=cfg.sample_size, replace=False)
        try:
            r, t = epnp(pw[sample], uv[sample], intr)
        except (PnPError, np.linalg.LinAlgError):
            continue
        err = reprojection_errors(r, t, pw, uv, intr)
        mask = err < cfg.inlier_threshold
        key = (int(mask.sum()), float(np.mean(err[mask])) if mask.any() else math.inf)
        if key[0] > best_key[0] or (key[0] == best_key[0] and key[1] < best_key[1]):
            best_key, best_mask = key, mask
            needed = _required_iterations(key[0] / len(idx), cfg.sample_size, cfg.confidence)

    if best_mask is None or best_key[0] < cfg.min_inliers:
        raise EstimationFailed(f"best consensus {max(best_key[0], 0)} < min_inliers={cfg.min_inliers}")

    fit = None
    mask = best_mask
    for _ in range(2):
        r, t = epnp(pw[mask], uv[mask], intr)
        err = reprojection_errors(r, t, pw, uv, intr)
        new_mask = err < cfg.inlier_threshold
        if new_mask.sum() < cfg.min_inliers:
            break
        fit = (r, t, err, new_mask)
        if np.array_equal(new_mask, mask):
            break
        mask = new_mask
    if fit is None:
        raise EstimationFailed("refit lost the consensus set")
    r, t, err, mask = fit

    inliers = np.zeros(len(pts3d), dtype=bool)
    inliers[idx[mask]] = True
    return PartPoseEstimate(
        rotation=r,
        translation=t,
        inliers=inliers,
        reproj_error=float(np.mean(err[mask])),
        iterations=it,
    )
