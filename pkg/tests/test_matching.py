import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from posefuse.matching import (
    DEFAULT_GAMMA,
    hungarian_match,
    keypoint_loss,
    matching_cost,
    solve_assignment,
)

PERMS = {n: list(itertools.permutations(range(n))) for n in range(1, 8)}


def brute_force(probs, c_g):
    n = probs.shape[0]
    costs = [(matching_cost(s, probs, c_g), s) for s in PERMS[n]]
    best = min(c for c, _ in costs)
    return best, min(s for c, s in costs if c == best)


def random_instance(rng, n=7):
    probs = rng.random((n, n))
    probs /= probs.sum(axis=1, keepdims=True)
    return probs, rng.integers(0, 2, n)


def test_matches_brute_force_and_lexicographic_tie_break():
    rng = np.random.default_rng(0)
    for _ in range(100):
        probs, c_g = random_instance(rng)
        cost, sigma = brute_force(probs, c_g)
        res = hungarian_match(probs, c_g)
        assert res.cost == cost
        assert res.sigma == sigma


@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_small_sizes(n, seed):
    rng = np.random.default_rng(seed)
    probs, c_g = random_instance(rng, n)
    res = hungarian_match(probs, c_g)
    assert sorted(res.sigma) == list(range(n))
    assert res.cost == brute_force(probs, c_g)[0]


@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_solver_against_enumeration(n, seed):
    cost = np.random.default_rng(seed).normal(size=(n, n))
    cols = solve_assignment(cost)
    best = min(sum(cost[i, p[i]] for i in range(n)) for p in PERMS[n])
    assert cost[np.arange(n), cols].sum() == pytest.approx(best, abs=1e-12)


def test_cost_examples():
    rng = np.random.default_rng(1)
    probs, _ = random_instance(rng)
    for s in PERMS[7][:50]:
        assert matching_cost(s, probs, np.zeros(7)) == 0.0
    peaked = np.eye(7) * 0.9 + 0.1 / 7
    peaked /= peaked.sum(axis=1, keepdims=True)
    c_g = np.zeros(7)
    c_g[2] = 1
    ident = tuple(range(7))
    assert matching_cost(ident, peaked, c_g) == pytest.approx(-peaked[2, 2])
    other = (0, 1, 3, 2, 4, 5, 6)
    assert matching_cost(other, peaked, c_g) >= -peaked[3, 2]


def test_perfect_and_permuted_detector():
    c_g = np.array([1, 0, 1, 1, 0, 1, 0])
    res = hungarian_match(np.eye(7), c_g)
    assert res.sigma == tuple(range(7))
    perm = np.random.default_rng(2).permutation(7)
    probs = np.eye(7)[perm]  # query q holds class perm[q]
    res = hungarian_match(probs, c_g)
    inverse = np.argsort(perm)
    for i in np.flatnonzero(c_g):
        assert res.sigma[i] == inverse[i]


def _exact_keypoints(rng):
    kp = rng.uniform(0, 600, (7, 32, 2))
    kp[6] = 0.0  # the no-object query regresses zeros
    return kp


def _perfect_probs(c_g):
    """One-hot rows: present classes on their own query, the rest at no-object."""
    probs = np.zeros((7, 7))
    for i in range(7):
        probs[i, i if c_g[i] else 6] = 1.0
    return probs


def test_loss_examples():
    rng = np.random.default_rng(3)
    kp = _exact_keypoints(rng)
    c_g = np.array([1, 1, 0, 1, 0, 1, 0])
    probs = _perfect_probs(c_g)
    perfect = hungarian_match(probs, c_g)
    gt = kp.copy()
    gt[c_g == 0] = np.nan
    assert keypoint_loss(perfect, probs, kp, c_g, gt) == 0.0
    uniform = np.full((7, 7), 1 / 7)
    res = hungarian_match(uniform, c_g)
    gt_u = np.full_like(kp, np.nan)
    for i in np.flatnonzero(c_g):
        gt_u[i] = kp[res.sigma[i]]
    assert keypoint_loss(res, uniform, kp, c_g, gt_u) == pytest.approx(7 * math.log(7), abs=1e-12)
    assert DEFAULT_GAMMA == 10.0


def test_loss_terms_and_weights():
    rng = np.random.default_rng(4)
    kp = _exact_keypoints(rng)
    c_g = np.array([1, 0, 0, 0, 0, 0, 0])
    probs = _perfect_probs(c_g)
    m = hungarian_match(probs, c_g)
    shifted = kp.copy()
    shifted[0, 0, 0] += 0.5
    assert keypoint_loss(m, probs, shifted, c_g, kp) == pytest.approx(10 * 0.5)
    assert keypoint_loss(m, probs, shifted, c_g, kp, gamma=2.0) == pytest.approx(1.0)
    # every row: 0.5 on its own class (or no-object for absent ones), rest spread
    soft = np.full((7, 7), 0.5 / 6)
    for i in range(7):
        soft[i, i if c_g[i] else 6] = 0.5
    full = keypoint_loss(m, soft, kp, c_g, kp)
    half = keypoint_loss(m, soft, kp, c_g, kp, null_weight=0.5)
    assert full == pytest.approx(7 * math.log(2))
    assert half == pytest.approx(math.log(2) + 0.5 * 6 * math.log(2))
    with pytest.raises(ValueError):
        keypoint_loss(m, soft, kp, c_g, kp, gamma=0.0)


@given(st.integers(0, 2**32 - 1))
def test_loss_nonnegative_and_permutation_covariant(seed):
    rng = np.random.default_rng(seed)
    probs, c_g = random_instance(rng)
    kp = _exact_keypoints(rng)
    gt = kp + rng.normal(size=kp.shape)
    base = keypoint_loss(hungarian_match(probs, c_g), probs, kp, c_g, gt)
    assert base >= 0
    perm = rng.permutation(7)
    p2, k2 = probs[perm], kp[perm]
    moved = keypoint_loss(hungarian_match(p2, c_g), p2, k2, c_g, gt)
    assert moved == pytest.approx(base, rel=1e-12)


def test_loss_zero_only_when_exact():
    rng = np.random.default_rng(5)
    kp = _exact_keypoints(rng)
    c_g = np.array([1, 1, 1, 1, 1, 1, 0])
    m = hungarian_match(np.eye(7), c_g)
    assert keypoint_loss(m, np.eye(7), kp, c_g, kp) == 0.0
    off = np.eye(7) * (1 - 1e-6) + 1e-6 / 7
    assert keypoint_loss(m, off, kp, c_g, kp) > 0.0
