import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from posefuse.fusion import (
    ConcentrationWarning,
    FusionConfig,
    NoInliers,
    angle_cdf,
    angle_quantile,
    d_from_s,
    eta_vectors,
    fuse,
    fuse_attitude,
    fuse_position,
    gate_and_weight,
    quantile_for_d,
    s_from_d,
    sample_matrix_fisher_isotropic,
    sigma_eta_concentrated,
    sigma_eta_empirical,
)
from posefuse.so3 import exp_so3, geodesic_angle, log_so3, random_rotation


def d_bessel(s: float) -> float:
    """Closed form: E[cos rho] = (I1 - (I0 + I2) / 2) / (I0 - I1) at argument 2s."""
    i0, i1, i2 = (special.ive(k, 2 * s) for k in range(3))
    return (1 + 2 * (i1 - (i0 + i2) / 2) / (i0 - i1)) / 3


# ----------------------------------------------------------------- gate


def test_gate_example():
    kept, w = gate_and_weight([0.95, 0.89, 0.99])
    assert kept == [0, 2]
    e = np.exp([0.95, 0.99])
    np.testing.assert_allclose(w, e / e.sum())
    np.testing.assert_allclose(w, [0.490, 0.510], atol=1e-3)


def test_gate_boundary_and_empty():
    kept, w = gate_and_weight([0.9, 0.93])
    assert kept == [1] and w.tolist() == [1.0]
    with pytest.raises(NoInliers):
        gate_and_weight([0.9, 0.5])
    with pytest.raises(NoInliers):
        gate_and_weight([])


@given(st.lists(st.floats(0.9001, 1.0), min_size=1, max_size=6), st.floats(-5, 5))
def test_softmax_shift_invariance(conf, shift):
    _, w = gate_and_weight(conf)
    _, w2 = gate_and_weight(np.add(conf, shift), gate=0.9 + shift)
    np.testing.assert_allclose(w, w2, atol=1e-12)
    assert w.sum() == pytest.approx(1.0)


# ------------------------------------------------------------- position


def test_position_examples():
    t = np.array([1.0, 2.0, 3.0])
    mu, sig = fuse_position([t, t, t], [0.2, 0.3, 0.5])
    np.testing.assert_allclose(mu, t)
    np.testing.assert_allclose(sig, 0, atol=1e-15)
    mu, sig = fuse_position([[1, 0, 0], [-1, 0, 0]], [0.5, 0.5])
    np.testing.assert_allclose(mu, 0)
    np.testing.assert_allclose(sig, np.diag([1.0, 0, 0]))
    mu, sig = fuse_position([t], [1.0])
    assert np.array_equal(mu, t) and not sig.any()


# ------------------------------------------------------------- attitude


def test_identical_rotations():
    r = random_rotation(np.random.default_rng(0))
    mu, svd = fuse_attitude([r, r, r], [0.3, 0.3, 0.4])
    np.testing.assert_allclose(mu, r, atol=1e-12)
    np.testing.assert_allclose(svd.d, 1, atol=1e-12)
    np.testing.assert_allclose(sigma_eta_empirical([r, r], [0.5, 0.5], svd.u, svd.v), 0, atol=1e-20)


@given(st.floats(0.01, 3.0), st.integers(0, 2**32 - 1))
def test_two_rotation_midpoint(theta, seed):
    r = random_rotation(np.random.default_rng(seed))
    mu, svd = fuse_attitude([r, r @ exp_so3([0, 0, theta])], [0.5, 0.5])
    np.testing.assert_allclose(mu, r @ exp_so3([0, 0, theta / 2]), atol=1e-9)
    # eta of the two samples is +-theta/2 about the common axis
    sig = sigma_eta_empirical([r, r @ exp_so3([0, 0, theta])], [0.5, 0.5], svd.u, svd.v)
    axis = svd.v.T @ [0, 0, 1.0]
    np.testing.assert_allclose(sig, (theta / 2) ** 2 * np.outer(axis, axis), atol=1e-9)


@given(st.integers(0, 2**32 - 1))
def test_mode_equivariance(seed):
    rng = np.random.default_rng(seed)
    base = random_rotation(rng)
    rs = [base @ exp_so3(0.3 * rng.normal(size=3)) for _ in range(5)]
    w = rng.dirichlet(np.ones(5))
    a, b = random_rotation(rng), random_rotation(rng)
    mu, _ = fuse_attitude(rs, w)
    mu2, _ = fuse_attitude([a @ r @ b for r in rs], w)
    np.testing.assert_allclose(mu2, a @ mu @ b, atol=1e-9)


def test_eta_reconstructs_inputs():
    rng = np.random.default_rng(1)
    rs = [exp_so3(0.2 * rng.normal(size=3)) for _ in range(4)]
    _, svd = fuse_attitude(rs, np.full(4, 0.25))
    for r, e in zip(rs, eta_vectors(rs, svd.u, svd.v)):
        np.testing.assert_allclose(svd.u @ exp_so3(e) @ svd.v.T, r, atol=1e-12)


def test_concentrated_covariance():
    np.testing.assert_allclose(sigma_eta_concentrated([1, 1, 1]), 0)
    np.testing.assert_allclose(sigma_eta_concentrated([0.9, 0.9, 0.9]), 0.1 * np.eye(3), atol=1e-15)
    with pytest.warns(ConcentrationWarning):
        sig = sigma_eta_concentrated([1, 1, 0])
    np.testing.assert_allclose(sig, np.diag([1.0, 1.0, 0.0]))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        sig = sigma_eta_concentrated([1.0, 1.0 - 1e-16, 1.0])
    assert np.all(np.diag(sig) >= 0)


def test_empirical_matches_concentrated_when_tight():
    rng = np.random.default_rng(2)
    spread = 0.01
    rs = [exp_so3(spread * rng.normal(size=3)) for _ in range(20_000)]
    w = np.full(len(rs), 1 / len(rs))
    _, svd = fuse_attitude(rs, w)
    emp = np.trace(sigma_eta_empirical(rs, w, svd.u, svd.v))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        conc = np.trace(sigma_eta_concentrated(svd.d))
    assert conc == pytest.approx(emp, rel=0.01)
    assert emp == pytest.approx(3 * spread**2, rel=0.05)


def test_fuse_end_to_end():
    rng = np.random.default_rng(3)
    r = random_rotation(rng)
    pos = [np.array([1.0, 2, 3]), np.array([1.2, 2, 3]), np.array([50.0, 0, 0])]
    att = [r, r @ exp_so3([0.01, 0, 0]), random_rotation(rng)]
    f = fuse(pos, att, [0.95, 0.97, 0.5])
    assert f.kept == [0, 1] and f.n_inliers == 2
    np.testing.assert_allclose(f.mu_t, f.weights @ np.array(pos[:2]))
    assert geodesic_angle(f.mu_r, r) < 0.01
    f2 = fuse(pos, att, [0.95, 0.97, 0.5], FusionConfig(sigma_eta_method="concentrated"))
    assert np.allclose(f2.sigma_eta, np.diag(np.diag(f2.sigma_eta)))
    assert f.scalar_d("d3") <= f.scalar_d("mean") <= f.scalar_d("d1")
    with pytest.raises(NoInliers):
        fuse(pos, att, [0.1, 0.2, 0.3])


# ------------------------------------------------------------ angle law


@pytest.mark.parametrize("s", [0.0, 0.01, 0.5, 1.0, 10.0, 100.0, 500.0, 5000.0])
def test_d_from_s_matches_bessel_closed_form(s):
    assert d_from_s(s) == pytest.approx(d_bessel(s), abs=1e-9)


def test_d_from_s_limits():
    # uniform rotations: E[cos rho] = -1/2
    assert d_from_s(0.0) == pytest.approx(0.0, abs=1e-12)
    # 1 - d(s) behaves like 1 / (2 s) for large s
    assert d_from_s(500.0) == pytest.approx(0.999, abs=2e-6)
    for s in (500.0, 5000.0, 50000.0):
        assert 2 * s * (1 - d_from_s(s)) == pytest.approx(1.0, abs=2 / s)
    s_grid = np.linspace(0, 500, 60)
    d = [d_from_s(s) for s in s_grid]
    assert np.all(np.diff(d) > 0)


@pytest.mark.parametrize("s", [0.1, 1.0, 10.0, 100.0, 1000.0])
def test_s_from_d_round_trip(s):
    assert s_from_d(d_from_s(s)) == pytest.approx(s, rel=1e-8)


def test_s_from_d_domain():
    assert s_from_d(0.0) == 0.0
    for bad in (-0.1, 1.0, 1.5):
        with pytest.raises(ValueError):
            s_from_d(bad)


@pytest.mark.parametrize("s", [0.0, 0.3, 5.0, 500.0])
def test_angle_cdf_endpoints_and_monotone(s):
    assert angle_cdf(s, 0.0) == 0.0
    assert angle_cdf(s, np.pi) == pytest.approx(1.0, abs=1e-10)
    vals = [angle_cdf(s, t) for t in np.linspace(0, np.pi, 40)]
    assert np.all(np.diff(vals) >= -1e-12)


def test_uniform_angle_cdf_closed_form():
    # Haar measure: (theta - sin theta) / pi
    for t in (0.3, 1.0, 2.0, 3.0):
        assert angle_cdf(0.0, t) == pytest.approx((t - np.sin(t)) / np.pi, abs=1e-12)


def test_quantile_examples():
    assert np.degrees(quantile_for_d(0.999, 0.95)) == pytest.approx(5.07, abs=0.05)
    q = [np.degrees(angle_quantile(s, 0.9)) for s in (1, 10, 100, 1000)]
    assert np.all(np.diff(q) < 0)
    with pytest.raises(ValueError):
        angle_quantile(10.0, 1.0)


def test_sampler_matches_bessel_mean():
    rng = np.random.default_rng(4)
    rots = sample_matrix_fisher_isotropic(3.0, 50_000, rng)
    np.testing.assert_allclose(np.mean(rots, axis=0), d_bessel(3.0) * np.eye(3), atol=0.01)
    mode = random_rotation(rng)
    moved = sample_matrix_fisher_isotropic(3.0, 2000, rng, mode=mode)
    mu, _ = fuse_attitude(moved, np.full(2000, 1 / 2000))
    assert geodesic_angle(mu, mode) < 0.05
    with pytest.raises(ValueError):
        sample_matrix_fisher_isotropic(0.0, 10, rng)


def test_sampler_angle_law_at_moderate_concentration():
    rng = np.random.default_rng(5)
    rots = sample_matrix_fisher_isotropic(2.0, 100_000, rng)
    rho = np.array([np.linalg.norm(log_so3(r)) for r in rots])
    for t in (0.3, 1.0, 2.0):
        p = angle_cdf(2.0, t)
        se = np.sqrt(p * (1 - p) / len(rho))
        assert abs(np.mean(rho <= t) - p) <= 3 * se
