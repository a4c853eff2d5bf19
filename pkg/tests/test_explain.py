import itertools
import math

import numpy as np
import pytest
from conftest import linear_model
from hypothesis import given, settings
from hypothesis import strategies as st

from tabrobust.attacks import AttackSpec, epsilon_grid
from tabrobust.data import Dataset, make_rng
from tabrobust.explain import (attribution_drift, drift_grid, feature_sensitivity, model_output, select_background,
                               sensitivity_drift_spearman, shapley_exact, shapley_sample, subsample_indices)

W0 = np.array([0.3, -1.0, 0.0, 2.0, 0.7])
W1 = np.array([-0.5, 1.5, 0.0, 1.0, 0.7])
DW = W1 - W0  # log-odds weights: [-0.8, 2.5, 0, -1, 0]


def shapley_by_orderings(f, x, bg):
    """Average marginal contribution over all d! feature orderings."""
    d = len(x)
    phi = np.zeros(d)

    def worth(coalition):
        rows = bg.copy()
        rows[:, list(coalition)] = x[list(coalition)]
        return f(rows).mean()

    for order in itertools.permutations(range(d)):
        seen = []
        prev = worth(seen)
        for j in order:
            seen.append(j)
            cur = worth(seen)
            phi[j] += cur - prev
            prev = cur
    return phi / math.factorial(d)


@pytest.fixture
def linear_data():
    rng = make_rng(8)
    x = rng.normal(size=(60, 5))
    return Dataset(x, (x @ DW > 0).astype(int), [f"f{i}" for i in range(5)])


def test_sensitivity_dead_input_and_linear_ratio(linear_data):
    p = linear_model(W0, W1)
    rep = feature_sensitivity(p, linear_data, n_samples=40, seed=1)
    assert rep.s[2] == 0
    assert rep.s[4] <= 1e-15  # equal weights in both logits cancel up to rounding
    live = np.abs(DW) > 1e-12
    ratio = rep.s[live] / np.abs(DW[live])
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-9)
    assert rep.ranking()[0] == 1
    assert rep.n_samples == 40 and len(set(rep.indices.tolist())) == 40


def test_subsample_bounds():
    with pytest.raises(ValueError):
        subsample_indices(5, 6, 0)
    assert sorted(subsample_indices(5, 5, 0)) == [0, 1, 2, 3, 4]


def test_exact_single_feature():
    f = lambda rows: 3 * rows[:, 0] + 1
    att = shapley_exact(f, [2.0], [[0.0], [1.0]])
    assert att.phi[0] == pytest.approx(3 * 2 - 3 * 0.5)
    assert att.base_value == pytest.approx(2.5)


def test_exact_linear_closed_form(linear_data):
    f = model_output(linear_model(W0, W1), "log_odds")
    bg = linear_data.x[:20]
    x = linear_data.x[30]
    att = shapley_exact(f, x, bg)
    np.testing.assert_allclose(att.phi, DW * (x - bg.mean(axis=0)), rtol=0, atol=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_exact_matches_ordering_oracle(small_model, gauss_data, seed):
    _, te = gauss_data
    f = model_output(small_model)
    bg = select_background(te, 8, seed)
    x = te.x[seed]
    np.testing.assert_allclose(shapley_exact(f, x, bg).phi, shapley_by_orderings(f, x, bg), rtol=0, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_exact_efficiency(seed):
    rng = make_rng(seed)
    W = rng.normal(size=(4, 2))
    f = model_output(linear_model(W[:, 0], W[:, 1], b=rng.normal(size=2)))
    x, bg = rng.normal(size=4), rng.normal(size=(7, 4))
    att = shapley_exact(f, x, bg)
    assert abs(att.efficiency_residual) <= 1e-9


def test_exact_symmetry_and_dummy():
    # f only depends on x0 + x1 and ignores x2
    f = lambda rows: np.tanh(rows[:, 0] + rows[:, 1])
    bg = np.array([[0.0, 0.0, 5.0], [1.0, 1.0, -3.0], [-0.5, -0.5, 2.0]])
    att = shapley_exact(f, [0.7, 0.7, 9.0], bg)
    assert att.phi[0] == pytest.approx(att.phi[1], abs=1e-12)
    assert att.phi[2] == 0


def test_exact_limits():
    f = lambda rows: rows.sum(axis=1)
    with pytest.raises(ValueError, match="12"):
        shapley_exact(f, np.zeros(13), np.zeros((2, 13)))
    with pytest.raises(ValueError, match="empty"):
        shapley_exact(f, np.zeros(3), np.zeros((0, 3)))
    with pytest.raises(ValueError):
        shapley_exact(f, np.zeros(3), np.zeros((2, 4)))


def test_sampled_converges_to_exact(small_model, gauss_data):
    _, te = gauss_data
    f = model_output(small_model)
    bg = select_background(te, 50, 0)
    for k in range(3):
        exact = shapley_exact(f, te.x[k], bg)
        approx = shapley_sample(f, te.x[k], bg, n_permutations=2000, seed=k)
        assert np.max(np.abs(approx.phi - exact.phi)) <= 0.02
        assert abs(approx.efficiency_residual) <= 3 * approx.stderr.sum()


def test_sampled_deterministic_and_exact_for_additive_model(linear_data):
    f = model_output(linear_model(W0, W1), "log_odds")
    bg = linear_data.x[:10]
    x = linear_data.x[40]
    a = shapley_sample(f, x, bg, 50, seed=3)
    b = shapley_sample(f, x, bg, 50, seed=3)
    assert a.phi.tobytes() == b.phi.tobytes()
    # additive model: each permutation credits w_j (x_j - bg_j) for its background row
    assert a.stderr[2] == 0 and a.phi[2] == 0
    with pytest.raises(ValueError):
        shapley_sample(f, x, bg, 0)


def test_model_output_forms():
    p = linear_model(W0, W1, b=(0.2, -0.1))
    x = make_rng(0).normal(size=(4, 5))
    prob = model_output(p)(x)
    lo = model_output(p, "log_odds")(x)
    np.testing.assert_allclose(lo, np.log(prob / (1 - prob)), rtol=1e-10)
    np.testing.assert_allclose(lo, x @ DW - 0.3, rtol=0, atol=1e-12)
    with pytest.raises(ValueError):
        model_output(p, "margin")


def test_drift_zero_budget(small_model, gauss_data):
    _, te = gauss_data
    bg = select_background(te, 20, 0)
    d = attribution_drift(small_model, te, AttackSpec("FGSM", 0.0), bg, n_samples=10, n_permutations=20)
    assert np.all(d == 0)


@pytest.mark.parametrize("exact", [False, True])
def test_drift_linear_log_odds(linear_data, exact):
    p = linear_model(W0, W1)
    bg = select_background(linear_data, 15, 0)
    eps = 0.1
    d = attribution_drift(p, linear_data, AttackSpec("FGSM", eps), bg, n_samples=20, n_permutations=30,
                          exact=exact, output="log_odds")
    np.testing.assert_allclose(d, np.abs(DW) * eps, rtol=0, atol=1e-12)


def test_drift_grid_linear_rows(linear_data):
    p = linear_model(W0, W1)
    bg = select_background(linear_data, 15, 0)
    grid = epsilon_grid(0.3, 4)
    rep = drift_grid(p, linear_data, AttackSpec("FGSM"), grid, bg, top_k=3, n_samples=20, n_permutations=10,
                     output="log_odds")
    assert rep.grid.shape == (4, 5)
    np.testing.assert_allclose(rep.grid, np.outer(grid, np.abs(DW)), rtol=0, atol=1e-12)
    assert rep.top_k.tolist() == [1, 3, 0]
    np.testing.assert_array_equal(rep.delta_phi, rep.grid[-1])
    single = drift_grid(p, linear_data, AttackSpec("FGSM"), [0.0], bg, n_samples=5, n_permutations=5)
    assert single.grid.shape == (1, 5) and np.all(single.grid == 0)


def test_drift_deterministic(small_model, gauss_data):
    _, te = gauss_data
    bg = select_background(te, 20, 1)
    args = (small_model, te, AttackSpec("PGD", 0.1), bg)
    a = attribution_drift(*args, n_samples=8, seed=2, n_permutations=20)
    b = attribution_drift(*args, n_samples=8, seed=2, n_permutations=20)
    assert a.tobytes() == b.tobytes()


def test_sensitivity_drift_spearman(linear_data, small_model, gauss_data):
    p = linear_model(W0, W1)
    s = feature_sensitivity(p, linear_data, 30).s
    d = attribution_drift(p, linear_data, AttackSpec("FGSM", 0.1), linear_data.x[:10], n_samples=30,
                          n_permutations=10, output="log_odds")
    assert sensitivity_drift_spearman(s, d) == pytest.approx(1.0)
    assert sensitivity_drift_spearman([1, 1, 1], [1, 2, 3]) is None

    _, te = gauss_data
    s = feature_sensitivity(small_model, te, 100).s
    d = attribution_drift(small_model, te, AttackSpec("FGSM", 0.1), select_background(te, 50), n_samples=100,
                          n_permutations=50)
    assert sensitivity_drift_spearman(s, d) > 0
