"""Confidence-weighted fusion of per-part poses and attitude uncertainty.

Positions are fused by a weighted mean and spread. Attitudes are fused
through the weighted first moment ``E[R]`` and its proper SVD; the attitude
mode is ``U V^T`` and the singular values measure concentration. For the
equal-concentration matrix Fisher distribution the rotation angle ``rho``
away from the mode has density proportional to
``exp(2 s cos rho) (1 - cos rho)`` on ``[0, pi]``.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, special

from .so3 import ProperSvd, log_so3, proper_svd

log = logging.getLogger(__name__)

CONFIDENCE_GATE = 0.9
S_MAX = 1e7
_QUAD_EPSABS = 1e-12
_ROUNDOFF = 1e-12


class NoInliers(ValueError):
    """Every estimate was rejected by the confidence gate."""


class ConcentrationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FusionConfig:
    gate: float = CONFIDENCE_GATE
    # which singular value feeds the scalar concentration model: "d3", "mean" or "d1"
    scalar_d: str = "d3"
    # "empirical" (weighted eta spread) or "concentrated" (singular-value formula)
    sigma_eta_method: str = "empirical"


@dataclass
class FusedPose:
    mu_t: np.ndarray
    sigma_t: np.ndarray
    mu_r: np.ndarray
    svd: ProperSvd
    sigma_eta: np.ndarray
    weights: np.ndarray
    kept: list[int] = field(default_factory=list)
    spread_t: np.ndarray | None = None

    @property
    def d(self) -> np.ndarray:
        return self.svd.d

    @property
    def n_inliers(self) -> int:
        return len(self.weights)

    def scalar_d(self, mode: str = "d3") -> float:
        d = self.svd.d
        return {"d3": float(d[2]), "d1": float(d[0]), "mean": float(np.mean(d))}[mode]


# ---------------------------------------------------------------- gate and weights


def gate_and_weight(confidences, gate: float = CONFIDENCE_GATE) -> tuple[list[int], np.ndarray]:
    """Indices with confidence strictly above ``gate`` and their softmax weights.

    Raises:
        NoInliers: nothing survives the gate.
    """
    o = np.asarray(confidences, dtype=float)
    kept = [i for i, c in enumerate(o) if c > gate]
    if not kept:
        raise NoInliers("no estimate passed the confidence gate")
    z = o[kept]
    e = np.exp(z - z.max())
    return kept, e / e.sum()


# ------------------------------------------------------------------------ position


def fuse_position(t_list, weights) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(t_list, dtype=float).reshape(-1, 3)
    w = np.asarray(weights, dtype=float)
    mu = w @ t
    dev = t - mu
    sigma = (w[:, None] * dev).T @ dev
    return mu, (sigma + sigma.T) / 2


# ------------------------------------------------------------------------ attitude


def fuse_attitude(r_list, weights) -> tuple[np.ndarray, ProperSvd]:
    r = np.asarray(r_list, dtype=float).reshape(-1, 3, 3)
    w = np.asarray(weights, dtype=float)
    first_moment = np.tensordot(w, r, axes=1)
    svd = proper_svd(first_moment)
    if svd.d[1] <= 0:
        log.warning("first moment is rank deficient: d=%s", svd.d)
    return svd.u @ svd.v.T, svd


def sigma_eta_concentrated(d) -> np.ndarray:
    """Diagonal rotation-vector covariance valid when all ``d`` are near 1.

    Negative entries (outside that regime) are clamped to zero with a warning.
    """
    d1, d2, d3 = (float(x) for x in d)
    diag = np.array([1 + d1 - d2 - d3, 1 - d1 + d2 - d3, 1 - d1 - d2 + d3])
    # round-off around zero is clamped silently
    if np.any(diag < -_ROUNDOFF):
        warnings.warn(
            f"concentrated covariance has negative entries {diag.tolist()}; clamped to 0",
            ConcentrationWarning,
            stacklevel=2,
        )
    return np.diag(np.clip(diag, 0.0, None))


def eta_vectors(r_list, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotation vectors ``eta_i`` with ``R_i = U exp(hat(eta_i)) V^T``."""
    return np.array([log_so3(u.T @ r @ v) for r in np.asarray(r_list).reshape(-1, 3, 3)])


def sigma_eta_empirical(r_list, weights, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    eta = eta_vectors(r_list, u, v)
    w = np.asarray(weights, dtype=float)
    sigma = (w[:, None] * eta).T @ eta
    return (sigma + sigma.T) / 2


def fuse(positions, attitudes, confidences, cfg: FusionConfig = FusionConfig()) -> FusedPose:
    """Gate, weight and fuse camera positions and camera-to-base attitudes."""
    kept, w = gate_and_weight(confidences, cfg.gate)
    t = np.asarray(positions, dtype=float).reshape(-1, 3)[kept]
    r = np.asarray(attitudes, dtype=float).reshape(-1, 3, 3)[kept]
    mu_t, sigma_t = fuse_position(t, w)
    mu_r, svd = fuse_attitude(r, w)
    if cfg.sigma_eta_method == "concentrated":
        sigma_eta = sigma_eta_concentrated(svd.d)
    else:
        sigma_eta = sigma_eta_empirical(r, w, svd.u, svd.v)
    return FusedPose(mu_t, sigma_t, mu_r, svd, sigma_eta, w, kept, spread_t=t - mu_t)


# ------------------------------------------------- equal-concentration angle law


def _angle_weight(rho, s: float):
    # exp(2 s cos rho) scaled by exp(-2 s) to stay finite for large s
    return np.exp(2.0 * s * (np.cos(rho) - 1.0)) * (1.0 - np.cos(rho))


def _normalizer(s: float) -> float:
    """``pi (I0(2s) - I1(2s)) exp(-2s)``, the integral of the scaled weight over [0, pi]."""
    return float(np.pi * (special.ive(0, 2.0 * s) - special.ive(1, 2.0 * s)))


def _quad(f, a: float, b: float, s: float) -> float:
    # the weight is concentrated in a window of width ~1/sqrt(s) at 0
    width = min(np.pi, 12.0 / np.sqrt(max(s, 1e-300)))
    pts = [p for p in (width / 4, width) if a < p < b]
    val, _ = integrate.quad(f, a, b, points=pts or None, epsabs=_QUAD_EPSABS,
                            epsrel=1e-12, limit=500)
    return float(val)


def angle_cdf(s: float, theta: float) -> float:
    """Probability that the rotation angle away from the mode is at most ``theta``."""
    if s < 0:
        raise ValueError("concentration must be non-negative")
    theta = float(np.clip(theta, 0.0, np.pi))
    if theta == 0.0:
        return 0.0
    num = _quad(lambda r: _angle_weight(r, s), 0.0, theta, s)
    return float(min(1.0, num / _normalizer(s)))


def d_from_s(s: float) -> float:
    """Singular value of ``E[R]`` for the equal-concentration law with parameter ``s``.

    ``tr R = 1 + 2 cos rho`` and ``E[R] = d I`` give ``d = (1 + 2 E[cos rho]) / 3``.
    """
    if s < 0:
        raise ValueError("concentration must be non-negative")
    z = _quad(lambda r: _angle_weight(r, s), 0.0, np.pi, s)
    m = _quad(lambda r: _angle_weight(r, s) * np.cos(r), 0.0, np.pi, s)
    return (1.0 + 2.0 * m / z) / 3.0


@lru_cache(maxsize=256)
def s_from_d(d: float, tol: float = 1e-10) -> float:
    """Invert :func:`d_from_s` by bracketing and bisection.

    Raises:
        ValueError: ``d`` outside ``[0, 1)``.
    """
    d = float(d)
    if not 0.0 <= d < 1.0:
        raise ValueError(f"d must lie in [0, 1), got {d}")
    if d == 0.0:
        return 0.0
    hi = 1.0
    while d_from_s(hi) < d:
        hi *= 2.0
        if hi > S_MAX:
            raise ValueError(f"d={d} too close to 1 for the supported concentration range")
    return float(optimize.bisect(lambda s: d_from_s(s) - d, 0.0, hi, xtol=1e-14 * hi,
                                 rtol=4 * np.finfo(float).eps, maxiter=400))


def angle_quantile(s: float, p: float) -> float:
    """Smallest angle ``theta`` with ``angle_cdf(s, theta) >= p`` (radians)."""
    if not 0.0 < p < 1.0:
        raise ValueError("probability must lie in (0, 1)")
    return float(optimize.brentq(lambda t: angle_cdf(s, t) - p, 0.0, np.pi, xtol=1e-13))


def quantile_for_d(d: float, p: float) -> float:
    """Angle bound in radians holding with probability ``p`` when ``E[R]`` has singular values ``d``."""
    return angle_quantile(s_from_d(d), p)


# ------------------------------------------------------------- test sampler

# proposal precision factor; 2 (cos rho - 1) + c rho^2 <= 0 on [0, pi] needs c <= 4 / pi^2
_PROPOSAL_C = 0.4


def sample_matrix_fisher_isotropic(s: float, n: int, rng: np.random.Generator,
                                   mode: np.ndarray | None = None) -> np.ndarray:
    """Draw ``n`` rotations with density proportional to ``exp(s tr(M^T R))``.

    Exact rejection sampling in exponential coordinates: a Gaussian proposal
    ``eta ~ N(0, I / (2 c s))`` is accepted with probability
    ``2 exp(2 s (cos rho - 1) + c s rho^2) (1 - cos rho) / rho^2``, which is
    the target-to-proposal ratio (Haar measure included) scaled to at most 1.
    It does not use the angle normalizer, so it can check :func:`angle_cdf`.
    """
    from .so3 import exp_so3

    if s <= 0:
        raise ValueError("sampler needs a positive concentration")
    c = _PROPOSAL_C
    out = np.empty((n, 3))
    filled = 0
    while filled < n:
        m = max(64, int(1.5 * (n - filled) / 0.2))
        eta = rng.normal(scale=1.0 / np.sqrt(2.0 * c * s), size=(m, 3))
        rho = np.linalg.norm(eta, axis=1)
        u = rng.random(m)
        with np.errstate(invalid="ignore", divide="ignore"):
            haar = np.where(rho > 1e-8, 2.0 * (1.0 - np.cos(rho)) / rho**2, 1.0)
        accept = np.exp(2.0 * s * (np.cos(rho) - 1.0) + c * s * rho**2) * haar
        ok = (rho <= np.pi) & (u < accept)
        take = eta[ok][: n - filled]
        out[filled:filled + len(take)] = take
        filled += len(take)
    rots = np.array([exp_so3(e) for e in out])
    if mode is not None:
        rots = np.asarray(mode, dtype=float) @ rots
    return rots
