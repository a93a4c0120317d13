import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gompertz_ks.analysis import (
    SearchBudget,
    ascend,
    check_conditions,
    estimate_gn,
    gn_ratio,
    log_ratio_gradient,
    starting_fields,
)
from gompertz_ks.errors import ConfigError
from gompertz_ks.kinetics import Gompertz, Logistic
from gompertz_ks.mesh import build_grid, gradient_energy
from gompertz_ks.stepper import ModelParams

# 1 - exp(-2): margin of K=1 over the floor for alpha=1
MARGIN_K_UNIT = 0.8646647167633873


def test_gn_ratio_of_constant_is_area_power(rect_grid):
    assert gn_ratio(rect_grid, rect_grid.full(3.0)) == pytest.approx(rect_grid.area ** -0.25, rel=1e-14)
    g = build_grid(1, 1, 9, 9)
    assert gn_ratio(g, g.full(0.2)) == pytest.approx(1.0, rel=1e-14)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(1e-3, 1e3))
def test_gn_ratio_is_scale_invariant(seed, scale):
    g = build_grid(1.3, 0.7, 11, 8)
    w = np.random.default_rng(seed).random(g.shape) + 1e-3
    assert gn_ratio(g, scale * w) == pytest.approx(gn_ratio(g, w), rel=1e-12)


def test_gn_ratio_rejects_bad_fields(unit_grid):
    with pytest.raises(ConfigError):
        gn_ratio(unit_grid, unit_grid.zeros())
    with pytest.raises(ConfigError):
        gn_ratio(unit_grid, unit_grid.full(-1.0))


def test_log_ratio_gradient_matches_finite_differences(rect_grid, rng):
    w = rng.random(rect_grid.shape) + 0.2
    value, grad = log_ratio_gradient(rect_grid, w)
    assert value == pytest.approx(math.log(gn_ratio(rect_grid, w)), rel=1e-13)
    eps = 1e-6
    for idx in [(0, 0), (3, 5), (6, 11), (2, 7)]:
        wp, wm = w.copy(), w.copy()
        wp[idx] += eps
        wm[idx] -= eps
        fd = (math.log(gn_ratio(rect_grid, wp)) - math.log(gn_ratio(rect_grid, wm))) / (2 * eps)
        assert grad[idx] == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_starting_fields_order_and_determinism(rect_grid):
    a = starting_fields(rect_grid, 15, seed=3)
    b = starting_fields(rect_grid, 15, seed=3)
    assert len(a) == 15
    assert np.all(a[0] == 1.0)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert all(np.all(w >= 0) and np.any(w) for w in a)


def test_ascend_never_decreases(rect_grid):
    for w0 in starting_fields(rect_grid, 10, seed=1)[1:]:
        q0 = gn_ratio(rect_grid, w0)
        q, w = ascend(rect_grid, w0, 30)
        assert q >= q0 and np.all(w >= 0)
        assert q == pytest.approx(gn_ratio(rect_grid, w), rel=1e-14)


def test_estimate_with_only_constant_start():
    g = build_grid(2.0, 0.5, 10, 6)
    est = estimate_gn(g, SearchBudget(multistarts=1, ascent_iters=50))
    assert est.c_gn_lower == pytest.approx(1.0, rel=1e-14)  # area is 1
    g = build_grid(2.0, 2.0, 10, 6)
    assert estimate_gn(g, SearchBudget(1, 50)).c_gn_lower == pytest.approx(4.0 ** -0.25, rel=1e-14)


def test_estimate_monotone_in_budget_and_deterministic():
    g = build_grid(1, 1, 16, 16)
    prev = 0.0
    for starts in (1, 3, 8, 14):
        c = estimate_gn(g, SearchBudget(starts, 60), seed=7).c_gn_lower
        assert c >= prev - 1e-15
        prev = c
    a = estimate_gn(g, SearchBudget(6, 20), seed=11)
    b = estimate_gn(g, SearchBudget(6, 20), seed=11)
    assert a.c_gn_lower == b.c_gn_lower and np.array_equal(a.argmax_field, b.argmax_field)
    d = a.to_dict()
    assert d["multistarts"] == 6 and d["seed"] == 11 and len(d["start_ratios"]) == 6


def test_estimate_monotone_in_iterations_per_start():
    g = build_grid(1, 1, 16, 16)
    for iters_lo, iters_hi in ((0, 5), (5, 40), (40, 150)):
        lo = estimate_gn(g, SearchBudget(8, iters_lo), seed=2)
        hi = estimate_gn(g, SearchBudget(8, iters_hi), seed=2)
        assert all(h >= l - 1e-15 for h, l in zip(hi.start_ratios, lo.start_ratios))


def test_unit_square_estimate_regression():
    # constant field dominates; bump ascents stay well below it
    est = estimate_gn(build_grid(1, 1, 32, 32), SearchBudget(12, 200), seed=0)
    assert est.c_gn_lower == pytest.approx(1.0, rel=1e-12)
    assert max(est.start_ratios[1:]) < 0.9


def test_check_conditions_examples():
    rep = check_conditions(ModelParams(0.1, 0, Gompertz(1.0, 1.0)), 1.0, 1.0, 1.0)
    assert rep.cond_K and rep.margin_K == pytest.approx(MARGIN_K_UNIT, rel=1e-14)
    assert rep.M == pytest.approx(1.0, rel=1e-14)
    assert rep.cond_chiM and rep.margin_chiM == pytest.approx(0.4, rel=1e-14)
    assert rep.overall and rep.heuristic

    edge = check_conditions(ModelParams(0.1, 0, Gompertz(1.0, math.exp(-2.0))), 1.0, 1.0, 1.0, "user")
    assert not edge.cond_K and not edge.overall and not edge.heuristic

    # chi*M exactly at the limit counts as satisfied
    at_limit = check_conditions(ModelParams(0.5, 0, Gompertz(1.0, 1.0)), 1.0, 1.0, 1.0)
    assert at_limit.cond_chiM and at_limit.margin_chiM == 0.0

    big = check_conditions(ModelParams(1.0, 0, Gompertz(1.0, 1.0)), 10.0, 1.0, 1.0)
    assert big.M == pytest.approx(10.0) and not big.cond_chiM


def test_check_conditions_rejects_other_sources():
    with pytest.raises(ConfigError):
        check_conditions(ModelParams(1.0, 0, Logistic(1.0, 1.0)), 1.0, 1.0, 1.0)
    with pytest.raises(ConfigError):
        check_conditions(ModelParams(1.0, 0, Gompertz(1.0, 1.0)), 1.0, 1.0, 0.0)


def test_corpus_inequality_guard(rect_grid):
    corpus = starting_fields(rect_grid, 12, seed=5)
    corpus += [ascend(rect_grid, w, 25)[1] for w in corpus[1:4]]
    q_best = max(gn_ratio(rect_grid, w) for w in corpus)
    A = rect_grid.cell_area
    for w in corpus:
        n4 = A * np.sum(w**4)
        n2 = math.sqrt(A * np.sum(w * w))
        g = math.sqrt(gradient_energy(rect_grid, w))
        assert n4 <= q_best**4 * (math.sqrt(g) * math.sqrt(n2) + n2) ** 4 * (1 + 1e-12)
