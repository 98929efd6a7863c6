import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slamkd.mixing import MixVariant, distractor_scale, mix, slam_example_loss, slam_objective
from slamkd.probvec import cross_entropy, one_hot, softmax_temp, top_mask

N, U = MixVariant.NORMALIZED, MixVariant.UNNORMALIZED


def test_alpha_one_is_identity():
    f = np.array([0.1, 0.6, 0.3])
    m = np.array([1, 1, 0])
    for v in (N, U):
        assert mix(f, 1.0, 2, m, v).tolist() == f.tolist()


def test_full_flip_binary():
    np.testing.assert_allclose(mix([1.0, 0.0], 0.0, 2, [1, 1], N), [0.0, 1.0])


def test_worked_example_sums_to_104():
    out = mix([0.5, 0.2, 0.2, 0.1], 0.6, 3, [1, 1, 0, 1], N)
    np.testing.assert_allclose(out, [0.40, 0.28, 0.12, 0.24], atol=1e-15)
    assert out.sum() == pytest.approx(1.04)


def test_unnormalized_drops_divisor():
    out = mix([0.5, 0.2, 0.2, 0.1], 0.6, 3, [1, 1, 0, 1], U)
    np.testing.assert_allclose(out, 0.6 * np.array([0.5, 0.2, 0.2, 0.1]) + 0.4 * np.array([0.5, 0.8, 0, 0.9]))


def test_input_validation():
    with pytest.raises(ValueError):
        mix([0.5, 0.5], 1.2, 2, [1, 1])
    with pytest.raises(ValueError):
        mix([0.5, 0.5], 0.5, 2, [1, 1, 0])
    with pytest.raises(ValueError):
        distractor_scale(1, N)
    assert distractor_scale(1, U) == 1
    assert MixVariant.parse("Normalized") is N
    with pytest.raises(ValueError):
        MixVariant.parse("softened")


def test_example_loss_values():
    assert slam_example_loss([1, 0], [1, 0], 1.0, 2, [1, 1]) == 0.0
    expected = -math.log(0.8 * 0.7 + 0.2 * 0.3)
    assert slam_example_loss([1, 0], [0.7, 0.3], 0.8, 2, [1, 1]) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(-math.log(0.62))


def test_objective_cases():
    ya = one_hot([0, 1], 3)
    fa = np.array([[0.7, 0.2, 0.1], [0.3, 0.6, 0.1]])
    plain = float(np.mean(cross_entropy(ya, fa)))
    empty = np.zeros((0, 3))
    assert slam_objective(ya, fa, empty, empty, [], [], empty) == pytest.approx(plain)

    yb = np.array([[0.2, 0.5, 0.3]])
    fb = np.array([[0.1, 0.8, 0.1]])
    mask = np.array([[1, 1, 0]])
    # hand value: normalized mix with alpha 0.5, k 2
    mb = np.array([0.5 * 0.1 + 0.5 * 0.9, 0.5 * 0.8 + 0.5 * 0.2, 0.05])
    hand = (cross_entropy(ya[0], fa[0]) + cross_entropy(ya[1], fa[1]) + 2.0 * cross_entropy(yb[0], mb)) / 3
    got = slam_objective(ya, fa, yb, fb, [0.5], [2], mask, N, weights=[2.0])
    assert got == pytest.approx(hand, rel=1e-13)
    with pytest.raises(ValueError):
        slam_objective(ya, fa, yb, fb, [0.5], [2], mask, N, weights=[-1.0])
    with pytest.raises(ValueError):
        slam_objective(empty, empty, empty, empty, [], [], empty)


def test_objective_alpha_one_matches_vanilla():
    rng = np.random.default_rng(3)
    fa = softmax_temp(rng.normal(size=(4, 5)))
    fb = softmax_temp(rng.normal(size=(6, 5)))
    ya = one_hot(rng.integers(0, 5, 4), 5)
    yb = softmax_temp(rng.normal(size=(6, 5)))
    masks = np.stack([top_mask(r, 3) for r in yb])
    vanilla = float(np.sum(cross_entropy(ya, fa)) + np.sum(cross_entropy(yb, fb))) / 10
    for v in (N, U):
        assert slam_objective(ya, fa, yb, fb, np.ones(6), np.full(6, 3), masks, v) == pytest.approx(vanilla, abs=1e-12)


@st.composite
def mix_case(draw):
    L = draw(st.integers(2, 6))
    k = draw(st.integers(2, L))
    seed = draw(st.integers(0, 2**32 - 1))
    alpha = draw(st.floats(0, 1))
    rng = np.random.default_rng(seed)
    mask = np.zeros(L)
    mask[rng.choice(L, k, replace=False)] = 1
    return L, k, alpha, mask, rng


@settings(max_examples=200, deadline=None)
@given(mix_case())
def test_normalized_sums_to_one_when_mass_on_mask(case):
    L, k, alpha, mask, rng = case
    f = rng.random(L) * mask
    f /= f.sum()
    assert mix(f, alpha, k, mask, N).sum() == pytest.approx(1.0, abs=1e-9)
    full = softmax_temp(rng.normal(size=L))
    assert mix(full, alpha, L, np.ones(L), N).sum() == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(mix_case())
def test_mix_of_inside_one_hot_is_distribution(case):
    L, k, alpha, mask, rng = case
    c = int(rng.choice(np.flatnonzero(mask)))
    out = mix(one_hot(c, L), alpha, k, mask, N)
    assert np.all(out >= 0)
    assert out.sum() == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_binary_mix_always_normalized(alpha, p):
    assert mix([p, 1 - p], alpha, 2, [1, 1], N).sum() == pytest.approx(1.0, abs=1e-12)


def test_loss_at_truth_is_entropy_and_stationary():
    # expected loss over y ~ mix(g), as a function of f: stationary at f = g on the simplex
    L, k, alpha = 3, 3, 0.7
    mask = np.ones(L)
    g = one_hot(1, L)
    target = mix(g, alpha, k, mask, N)

    def loss(f):
        return cross_entropy(target, mix(f, alpha, k, mask, N))

    assert loss(g) == pytest.approx(cross_entropy(target, target))
    h = 1e-6
    # directional derivatives along simplex-preserving directions toward the interior from g
    for j in (0, 2):
        d = -g.copy()
        d[j] += 1
        forward = (loss(g + h * d) - loss(g)) / h
        assert forward >= -1e-6


def test_small_alpha_with_partial_mask_breaks_consistency():
    # k < L and alpha < 1/k: the mixed output is not a distribution, and the
    # expected loss is minimized by moving all mass outside the mask.
    from oracles import simplex_grid

    grid = simplex_grid(3, 1e-3)
    mask = np.array([1, 1, 0])
    g = one_hot(0, 3)

    def argmin_f(alpha):
        target = mix(g, alpha, 2, mask, N)
        values = cross_entropy(target[None], mix(grid, alpha, 2, np.broadcast_to(mask, grid.shape), N))
        return grid[int(np.argmin(values))]

    assert argmin_f(0.3).tolist() == [0.0, 0.0, 1.0]
    assert argmin_f(0.6).tolist() == [1.0, 0.0, 0.0]
    # with the full mask (k = L) the minimizer is g even for alpha far below 1/k
    target = mix(g, 0.2, 3, np.ones(3), N)
    values = cross_entropy(target[None], mix(grid, 0.2, 3, np.ones_like(grid), N))
    assert grid[int(np.argmin(values))].tolist() == [1.0, 0.0, 0.0]
