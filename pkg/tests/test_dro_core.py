"""Worst-case expectation routes, cross-checked against direct LP assemblies.

The package computes three reformulations (separable, shared-index,
exponential product form). Each is pinned here to an independently assembled
scipy LP over the same anchor measure, and bounded by the joint-coupling
grid oracle, which is the one route that never factors through an anchor.
"""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msdro_opf.dro_core import (BoxSupport, MultiDataset, PiecewiseMaxAffine,
                                SeparableAffineCost, robust_value,
                                sample_average, separable_thresholds,
                                sup_affine_minus_l1, wc_expectation_general,
                                wc_expectation_separable,
                                wc_expectation_single_budget,
                                wc_expectation_standardized)
from msdro_opf.errors import InputError, ModeError, SizeError

from oracles import anchored_dual_value, grid_sup_affine, multi_marginal_value

BOX11 = BoxSupport([-1.0], [1.0])


def random_instance(rng, d=None, n=None, k=None, eps_hi=0.5):
    d = d or int(rng.integers(1, 4))
    n = n or int(rng.integers(1, 5))
    k = k or int(rng.integers(1, 5))
    lo = -rng.uniform(0.5, 2.0, d)
    up = rng.uniform(0.5, 2.0, d)
    xs = np.vstack([rng.uniform(lo[j], up[j], n) for j in range(d)])
    data = MultiDataset(xs, rng.uniform(0.0, eps_hi, d))
    cost = PiecewiseMaxAffine(rng.normal(size=(k, d)), rng.normal(size=k))
    return cost, data, BoxSupport(lo, up)


def product_anchor(data):
    atoms = np.array([[data.samples[j][m[j]] for j in range(data.dimension)]
                      for m in itertools.product(*map(range, data.counts))])
    return atoms, np.full(len(atoms), 1.0 / len(atoms))


# --- inner sup ---------------------------------------------------------------

def test_sup_free_transport_reaches_corner():
    assert sup_affine_minus_l1([1.0], [0.0], [0.0], BOX11) == pytest.approx(1.0)


def test_sup_dominating_penalty_stays_at_sample():
    assert sup_affine_minus_l1([1.0], [1.0], [0.2], BOX11) == pytest.approx(0.2)


def test_sup_partial_pull_toward_corner():
    assert sup_affine_minus_l1([2.0], [1.0], [0.0], BOX11) == pytest.approx(1.0)


def test_sup_matches_grid_search():
    rng = np.random.default_rng(43)
    for _ in range(25):
        d = int(rng.integers(1, 5))
        lo = -rng.uniform(0.1, 2.0, d)
        up = rng.uniform(0.1, 2.0, d)
        xhat = rng.uniform(lo, up)
        a = rng.normal(size=d)
        lam = rng.uniform(0.0, 2.0, d)
        box = BoxSupport(lo, up)
        assert sup_affine_minus_l1(a, lam, xhat, box) == pytest.approx(
            grid_sup_affine(a, lam, xhat, lo, up), abs=1e-12)


def test_sup_rejects_negative_lambda_and_outside_sample():
    with pytest.raises(InputError):
        sup_affine_minus_l1([1.0], [-0.1], [0.0], BOX11)
    with pytest.raises(InputError):
        sup_affine_minus_l1([1.0], [0.5], [1.5], BOX11)


@settings(max_examples=80)
@given(
    st.floats(min_value=-5, max_value=5),
    st.floats(min_value=0, max_value=10),
    st.floats(min_value=-1, max_value=1),
)
def test_sup_dominates_sample_value(a, lam, xhat):
    got = sup_affine_minus_l1([a], [lam], [xhat], BOX11)
    assert got >= a * xhat - 1e-12
    if lam >= abs(a):
        assert got == pytest.approx(a * xhat, abs=1e-12)


# --- separable route ---------------------------------------------------------

def test_separable_small_budget_shifts_linearly():
    data = MultiDataset([np.array([0.0])], [0.1])
    res = wc_expectation_separable(SeparableAffineCost([-1.0]), data, BOX11)
    assert res.value == pytest.approx(0.1)
    assert res.lam[0] == pytest.approx(1.0)


def test_separable_zero_budget_is_sample_average():
    data = MultiDataset([np.array([0.0])], [0.0])
    res = wc_expectation_separable(SeparableAffineCost([-1.0]), data, BOX11)
    assert res.value == pytest.approx(0.0, abs=1e-9)


def test_separable_saturated_budget_hits_corner():
    data = MultiDataset([np.array([0.0])], [1.5])
    res = wc_expectation_separable(SeparableAffineCost([-1.0]), data, BOX11)
    assert res.value == pytest.approx(1.0)
    assert res.lam[0] == pytest.approx(0.0, abs=1e-9)


def test_separable_threshold_is_mean_distance_to_worst_corner():
    data = MultiDataset([np.array([-0.2, 0.6]), np.array([0.1])], [0.1, 0.1])
    box = BoxSupport([-1.0, -0.5], [1.0, 1.5])
    thr = separable_thresholds(SeparableAffineCost([-2.0, 3.0]), data, box)
    # c_1 < 0 pulls to the lower end, c_2 > 0 to the upper end.
    assert thr[0] == pytest.approx(np.mean([0.8, 1.6]))
    assert thr[1] == pytest.approx(1.4)


def test_separable_flags_degenerate_budget():
    data = MultiDataset([np.array([0.0])], [1.0])
    res = wc_expectation_separable(SeparableAffineCost([-1.0]), data, BOX11)
    assert res.thresholds[0] == pytest.approx(1.0)
    assert res.degenerate[0]
    assert res.value == pytest.approx(1.0)


def test_separable_lambda_dichotomy():
    rng = np.random.default_rng(47)
    for _ in range(25):
        d = int(rng.integers(1, 4))
        lo = -rng.uniform(0.5, 2.0, d)
        up = rng.uniform(0.5, 2.0, d)
        xs = [rng.uniform(lo[j], up[j], int(rng.integers(1, 5)))
              for j in range(d)]
        c = -rng.uniform(0.2, 3.0, d)
        data = MultiDataset(xs, rng.uniform(0.0, 2.0, d))
        res = wc_expectation_separable(SeparableAffineCost(c), data,
                                       BoxSupport(lo, up))
        for j in range(d):
            if res.degenerate[j]:
                continue
            near_zero = abs(res.lam[j]) < 1e-6
            near_coef = abs(res.lam[j] - abs(c[j])) < 1e-6
            assert near_zero or near_coef


def test_separable_equals_sum_of_single_feature_problems():
    rng = np.random.default_rng(53)
    for _ in range(10):
        d = int(rng.integers(1, 4))
        lo = -rng.uniform(0.5, 2.0, d)
        up = rng.uniform(0.5, 2.0, d)
        xs = [rng.uniform(lo[j], up[j], int(rng.integers(1, 5)))
              for j in range(d)]
        eps = rng.uniform(0.0, 0.5, d)
        c = rng.normal(size=d)
        data = MultiDataset(xs, eps)
        box = BoxSupport(lo, up)
        whole = wc_expectation_separable(SeparableAffineCost(c), data, box)
        parts = sum(
            wc_expectation_general(
                PiecewiseMaxAffine([[c[j]]], [0.0]),
                MultiDataset([xs[j]], [eps[j]]),
                BoxSupport([lo[j]], [up[j]]))
            for j in range(d))
        assert whole.value == pytest.approx(parts, rel=1e-6, abs=1e-9)


def test_single_piece_cost_agrees_across_routes():
    rng = np.random.default_rng(59)
    for _ in range(10):
        cost, data, box = random_instance(rng, k=1)
        c = cost.a[0]
        sep = wc_expectation_separable(SeparableAffineCost(c), data, box)
        gen = wc_expectation_general(cost, data, box)
        assert gen == pytest.approx(sep.value + cost.b[0], rel=1e-7, abs=1e-8)


# --- product-form route ------------------------------------------------------

def test_general_matches_direct_product_assembly():
    rng = np.random.default_rng(61)
    for _ in range(12):
        cost, data, box = random_instance(rng)
        atoms, weights = product_anchor(data)
        direct = anchored_dual_value(cost.a, cost.b, atoms, weights,
                                     data.epsilons, box.lower, box.upper)
        assert wc_expectation_general(cost, data, box) == pytest.approx(
            direct, rel=1e-9, abs=1e-9)


def test_general_zero_budget_is_product_average():
    rng = np.random.default_rng(67)
    for _ in range(6):
        cost, data, box = random_instance(rng, eps_hi=0.0)
        assert wc_expectation_general(cost, data, box) == pytest.approx(
            sample_average(cost, data), rel=1e-8, abs=1e-9)


def test_general_saturated_budget_is_robust_value():
    rng = np.random.default_rng(71)
    for _ in range(6):
        cost, data, box = random_instance(rng, k=1)
        # Budget >= mean distance to the maximizing corner frees every atom.
        corner = np.where(cost.a[0] >= 0, box.upper, box.lower)
        eps = np.array([np.mean(np.abs(data.samples[j] - corner[j])) + 0.01
                        for j in range(data.dimension)])
        rich = MultiDataset(list(data.samples), eps)
        assert wc_expectation_general(cost, rich, box) == pytest.approx(
            robust_value(cost, box), rel=1e-8)


def test_general_product_cap():
    xs = [np.linspace(-0.9, 0.9, 400), np.linspace(-0.9, 0.9, 400)]
    data = MultiDataset(xs, [0.1, 0.1])
    box = BoxSupport([-1, -1], [1, 1])
    with pytest.raises(SizeError):
        wc_expectation_general(PiecewiseMaxAffine([[1.0, 1.0]], [0.0]),
                               data, box)
    assert wc_expectation_general(PiecewiseMaxAffine([[1.0, 1.0]], [0.0]),
                                  data, box, cap=200_000) > 0


def test_general_rejects_dimension_mismatch():
    data = MultiDataset([np.array([0.0])], [0.1])
    with pytest.raises(InputError):
        wc_expectation_general(PiecewiseMaxAffine([[1.0, 0.0]], [0.0]),
                               data, BOX11)


# --- shared-index route ------------------------------------------------------

def test_standardized_matches_direct_shared_index_assembly():
    rng = np.random.default_rng(73)
    for _ in range(12):
        cost, data, box = random_instance(rng)
        direct = anchored_dual_value(cost.a, cost.b, data.matrix().T,
                                     np.full(data.counts[0],
                                             1.0 / data.counts[0]),
                                     data.epsilons, box.lower, box.upper)
        got = wc_expectation_standardized(cost, data, box)
        assert got.value == pytest.approx(direct, rel=1e-9, abs=1e-9)


def test_standardized_zero_budget_is_shared_index_average():
    rng = np.random.default_rng(79)
    cost, data, box = random_instance(rng, d=2, n=4, eps_hi=0.0)
    anchor = float(np.mean(cost.evaluate(data.matrix())))
    got = wc_expectation_standardized(cost, data, box)
    assert got.value == pytest.approx(anchor, rel=1e-8, abs=1e-9)


def test_standardized_requires_equal_counts():
    data = MultiDataset([np.array([0.1, 0.2]), np.array([0.0])], [0.1, 0.1])
    box = BoxSupport([-1, -1], [1, 1])
    with pytest.raises(ModeError):
        wc_expectation_standardized(PiecewiseMaxAffine([[1.0, 1.0]], [0.0]),
                                    data, box)


def test_one_feature_routes_all_coincide():
    rng = np.random.default_rng(83)
    for _ in range(8):
        cost, data, box = random_instance(rng, d=1, k=1)
        gen = wc_expectation_general(cost, data, box)
        std = wc_expectation_standardized(cost, data, box).value
        sep = wc_expectation_separable(
            SeparableAffineCost(cost.a[0]), data, box).value + cost.b[0]
        pooled = wc_expectation_single_budget(cost, data, box,
                                              float(data.epsilons[0]))
        assert std == pytest.approx(gen, rel=1e-8, abs=1e-9)
        assert sep == pytest.approx(gen, rel=1e-8, abs=1e-9)
        assert pooled == pytest.approx(gen, rel=1e-8, abs=1e-9)


def test_standardized_never_exceeds_pooled_budget_comparator():
    rng = np.random.default_rng(89)
    for _ in range(10):
        cost, data, box = random_instance(rng)
        std = wc_expectation_standardized(cost, data, box).value
        pooled = wc_expectation_single_budget(
            cost, data, box, float(np.sum(data.epsilons)))
        assert std <= pooled + 1e-7 * (1 + abs(pooled))


# --- cross-route structure ---------------------------------------------------

def test_routes_are_inner_bounds_of_joint_coupling_oracle():
    """Both anchored reformulations stay below the marginal-constrained sup.

    The joint-coupling grid LP optimizes over every joint measure whose
    per-feature transport distance to each dataset is within budget; the
    anchored forms restrict attention to couplings against one fixed anchor
    measure, so they can only come out lower.
    """
    rng = np.random.default_rng(97)
    for _ in range(8):
        cost, data, box = random_instance(rng, d=2, n=3, k=3, eps_hi=0.4)
        mm = multi_marginal_value(cost.a, cost.b, list(data.samples),
                                  data.epsilons, box.lower, box.upper)
        gen = wc_expectation_general(cost, data, box)
        std = wc_expectation_standardized(cost, data, box).value
        assert gen <= mm + 1e-7 * (1 + abs(mm))
        assert std <= mm + 1e-7 * (1 + abs(mm))


def test_single_piece_routes_attain_joint_coupling_oracle():
    rng = np.random.default_rng(101)
    for _ in range(6):
        cost, data, box = random_instance(rng, d=2, n=3, k=1, eps_hi=0.4)
        mm = multi_marginal_value(cost.a, cost.b, list(data.samples),
                                  data.epsilons, box.lower, box.upper)
        gen = wc_expectation_general(cost, data, box)
        std = wc_expectation_standardized(cost, data, box).value
        assert gen == pytest.approx(mm, rel=1e-7, abs=1e-8)
        assert std == pytest.approx(mm, rel=1e-7, abs=1e-8)


def test_monotone_in_budgets():
    rng = np.random.default_rng(103)
    for _ in range(6):
        cost, data, box = random_instance(rng, eps_hi=0.3)
        bigger = MultiDataset(list(data.samples),
                              data.epsilons + rng.uniform(0.0, 0.3,
                                                          data.dimension))
        lo_g = wc_expectation_general(cost, data, box)
        hi_g = wc_expectation_general(cost, bigger, box)
        assert lo_g <= hi_g + 1e-8 * (1 + abs(hi_g))
        lo_s = wc_expectation_standardized(cost, data, box).value
        hi_s = wc_expectation_standardized(cost, bigger, box).value
        assert lo_s <= hi_s + 1e-8 * (1 + abs(hi_s))


def test_values_between_anchor_average_and_robust():
    rng = np.random.default_rng(107)
    for _ in range(10):
        cost, data, box = random_instance(rng)
        rob = robust_value(cost, box)
        gen = wc_expectation_general(cost, data, box)
        assert sample_average(cost, data) - 1e-8 <= gen <= rob + 1e-8
        std = wc_expectation_standardized(cost, data, box)
        diag = float(np.mean(cost.evaluate(data.matrix())))
        assert diag - 1e-8 <= std.value <= rob + 1e-8


# --- input validation --------------------------------------------------------

def test_box_support_validation():
    with pytest.raises(InputError):
        BoxSupport([0.5], [1.0])
    with pytest.raises(InputError):
        BoxSupport([-1.0], [-0.2])
    with pytest.raises(InputError):
        BoxSupport([1.0], [0.5])


def test_dataset_validation():
    with pytest.raises(InputError):
        MultiDataset([np.array([0.0])], [-0.1])
    with pytest.raises(InputError):
        MultiDataset([np.array([2.0])], [0.1]).validate_within(BOX11)
