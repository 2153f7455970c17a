import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aftercast.baselines import (BaselineCombiner, BaselineConfig, BaselineMethod, NotReady, bg_weights,
                                 clr_combine, clr_objective, clr_weights, lr_coefficients, lr_combine,
                                 median_combine, simple_average, trimmed_mean)
from oracles import clr_grid_min, normal_equations


@pytest.mark.parametrize("f,sa", [((1, 2, 3), 2), ((5,), 5), ((-1, 1), 0)])
def test_simple_average(f, sa):
    assert simple_average(f) == sa


@pytest.mark.parametrize("f,md", [((1, 2, 9), 2), ((1, 3), 2), ((4, 4, 4, 10), 4)])
def test_median(f, md):
    assert median_combine(f) == md


@pytest.mark.parametrize("f,tm", [((1, 2, 3, 10), 2.5), ((1, 2), 1.5), ((5, 5, 5), 5)])
def test_trimmed_mean(f, tm):
    assert trimmed_mean(f) == tm


def test_empty_inputs():
    for fn in (simple_average, median_combine, trimmed_mean):
        with pytest.raises(ValueError):
            fn([])


@given(st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=30))
def test_trimmed_mean_cross_check(f):
    assert trimmed_mean(f) == pytest.approx(simple_average(sorted(f)[1:-1]), rel=1e-12, abs=1e-9)


def test_bg_hand_examples():
    # squared-error histories whose plain means are v = (1, 4)
    np.testing.assert_allclose(bg_weights([[1.0, 4.0]]), [0.8, 0.2], atol=1e-15)
    np.testing.assert_allclose(bg_weights([[2.5, 2.5], [2.5, 2.5]]), [0.5, 0.5], atol=1e-15)
    # rho = 0.5, one candidate with e^2 = 4 then 1 -> v = 2; a second with v = 1
    w = bg_weights([[4.0, 1.0], [1.0, 1.0]], rho=0.5)
    np.testing.assert_allclose(w, [1 / 3, 2 / 3], atol=1e-15)
    with pytest.raises(NotReady):
        bg_weights(np.zeros((0, 2)))


def test_bg_zero_floor():
    w = bg_weights([[0.0, 1.0]])
    assert np.all(np.isfinite(w)) and w[0] > 0.999999
    np.testing.assert_allclose(bg_weights([[0.0, 0.0]]), [0.5, 0.5])


@given(st.lists(st.lists(st.floats(0.01, 100), min_size=3, max_size=3), min_size=1, max_size=15),
       st.floats(1e-3, 1e3), st.sampled_from([None, 0.7, 0.95]))
@settings(max_examples=200, deadline=None)
def test_bg_scale_invariance(E, c, rho):
    E = np.array(E)
    np.testing.assert_allclose(bg_weights(E * c, rho), bg_weights(E, rho), atol=1e-12)


def test_lr_matches_normal_equations():
    rng = np.random.default_rng(0)
    for _ in range(20):
        F = rng.normal(size=(30, 4))
        y = F @ rng.normal(size=4) + rng.normal(size=30)
        np.testing.assert_allclose(lr_coefficients(F, y), normal_equations(F, y), atol=1e-8)


def test_lr_exact_candidate():
    rng = np.random.default_rng(1)
    F = rng.normal(size=(20, 3))
    y = F[:, 1].copy()
    f = rng.normal(size=3)
    assert lr_combine(F, y, f) == pytest.approx(f[1], abs=1e-8)


def test_lr_constant_and_duplicates():
    F = np.full((10, 2), 3.0)
    assert lr_combine(F, np.full(10, 3.0), [3.0, 3.0]) == pytest.approx(3.0, abs=1e-10)
    rng = np.random.default_rng(2)
    G = rng.normal(size=(25, 2))
    y = G @ [0.6, 0.3] + rng.normal(0, 0.1, 25)
    f = rng.normal(size=2)
    dup = lr_combine(np.column_stack([G, G[:, 1]]), y, [*f, f[1]])
    assert dup == pytest.approx(lr_combine(G, y, f), abs=1e-8)


def test_lr_not_ready():
    with pytest.raises(NotReady):
        lr_coefficients(np.ones((4, 3)), np.ones(4))


def test_clr_matches_grid_search():
    rng = np.random.default_rng(3)
    worst = -np.inf
    for _ in range(100):
        T = int(rng.integers(3, 30))
        F = rng.normal(size=(T, 3)) + rng.normal(size=3)
        y = F @ rng.dirichlet(np.ones(3)) + rng.normal(0, rng.uniform(0.01, 2), T)
        w = clr_weights(F, y)
        worst = max(worst, clr_objective(F, y, w) - clr_grid_min(F, y))
    assert worst <= 1e-4


def test_clr_concentrates_on_exact_candidate():
    rng = np.random.default_rng(4)
    y = rng.normal(size=40)
    F = np.column_stack([y, rng.normal(0, 10, 40), rng.normal(0, 10, 40)])
    assert clr_weights(F, y)[0] >= 0.99


def test_clr_ties_and_singletons():
    F = np.tile(np.arange(5.0)[:, None], (1, 3))
    np.testing.assert_allclose(clr_weights(F, np.arange(5.0) + 0.3), [1 / 3] * 3, atol=1e-12)
    np.testing.assert_array_equal(clr_weights(np.ones((3, 1)), np.ones(3)), [1.0])


@pytest.mark.parametrize("J", [2, 5, 10, 24])
def test_clr_kkt(J):
    rng = np.random.default_rng(J)
    for _ in range(10):
        F = rng.normal(size=(18, J)) + rng.normal(size=J)
        y = rng.normal(size=18)
        w = clr_weights(F, y)
        g = F.T @ (F @ w - y)
        act = w > 1e-12
        gamma = g[act].mean()
        scale = max(np.linalg.norm(F, 2) ** 2, 1)
        assert np.all(np.abs(g[act] - gamma) <= 1e-8 * scale)
        assert np.all(g[~act] >= gamma - 1e-8 * scale)
        assert abs(w.sum() - 1) < 1e-12 and np.all(w >= 0)


@given(st.integers(2, 6), st.integers(1, 20), st.integers(0, 2**32 - 1))
@settings(max_examples=1000, deadline=None)
def test_clr_no_worse_than_vertices(J, T, seed):
    rng = np.random.default_rng(seed)
    F = rng.normal(size=(T, J)) * rng.uniform(0.1, 3, J)
    y = rng.normal(size=T)
    val = clr_objective(F, y, clr_weights(F, y))
    assert all(val <= clr_objective(F, y, e) + 1e-9 * (1 + abs(val)) for e in np.eye(J))


def test_combiners_stay_in_range_except_lr():
    rng = np.random.default_rng(5)
    F = rng.normal(size=(30, 4))
    y = F @ [2.0, -1.0, 0.5, 0.1] + 3.0
    outside = False
    for m in BaselineMethod:
        cfg = BaselineConfig(m, rho=0.9 if m is BaselineMethod.DISCOUNTED_BG else None)
        comb = BaselineCombiner(cfg, 4)
        for f, v in zip(F, y):
            c = comb.forecast(f)
            if m is BaselineMethod.LR:
                outside |= not (f.min() - 1e-12 <= c <= f.max() + 1e-12)
            else:
                assert f.min() - 1e-12 <= c <= f.max() + 1e-12
            comb.absorb(f, v)
    assert outside  # LR is exempt and does leave the range here


def test_not_ready_falls_back_to_sa():
    comb = BaselineCombiner(BaselineConfig(BaselineMethod.LR), 3)
    assert comb.forecast([1.0, 2.0, 6.0]) == 3.0
    bg = BaselineCombiner(BaselineConfig(BaselineMethod.BG), 2)
    assert bg.forecast([0.0, 1.0]) == 0.5


def test_config_rho_rules():
    with pytest.raises(ValueError):
        BaselineConfig(BaselineMethod.DISCOUNTED_BG)
    with pytest.raises(ValueError):
        BaselineConfig(BaselineMethod.BG, rho=0.5)
    with pytest.raises(ValueError):
        BaselineConfig(BaselineMethod.DISCOUNTED_BG, rho=1.5)


def test_clr_combine_uses_weights():
    F = np.array([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
    y = np.array([1.0, 2.0, 3.0])
    assert clr_combine(F, y, [5.0, -1.0]) == pytest.approx(5.0)
