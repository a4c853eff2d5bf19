import math

import numpy as np
import pytest
from conftest import linear_model
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tabrobust.attacks import (AttackError, AttackSpec, attack, epsilon_grid, fgsm, pgd, project_linf, sweep,
                               validate_grid)
from tabrobust.data import Dataset, make_rng
from tabrobust.model import ModelParams, evaluate, logits, per_sample_loss

W0 = np.array([0.5, -1.0, 0.0, 2.0])
W1 = np.array([-0.5, 1.5, 0.0, 1.0])


def margin(params, x):
    z = logits(params, x)
    return z[:, 1] - z[:, 0]


def test_epsilon_grid_default():
    g = epsilon_grid()
    assert len(g) == 10 and g[0] == 0 and g[-1] == 0.3
    assert epsilon_grid(0.3, 1).tolist() == [0.0]
    with pytest.raises(ValueError):
        epsilon_grid(0.0, 5)
    with pytest.raises(ValueError):
        validate_grid([0.1, 0.2])
    with pytest.raises(ValueError):
        validate_grid([0, 0.2, 0.2])


def test_fgsm_zero_budget_is_identity(small_model, gauss_data):
    _, te = gauss_data
    assert fgsm(small_model, te.x, te.y, 0.0).tobytes() == te.x.tobytes()


def test_fgsm_sign_example():
    # gradient of the y=1 loss points along w0 - w1
    p = linear_model([1.0, -1.0, 0.0], [0.0, 0.0, 0.0])
    out = fgsm(p, np.zeros((1, 3)), [1], 0.1)
    np.testing.assert_array_equal(out, [[0.1, -0.1, 0.0]])


def test_fgsm_rejects_negative_budget():
    with pytest.raises(ValueError):
        fgsm(linear_model([1.0], [0.0]), [[0.0]], [0], -0.1)


@pytest.mark.parametrize("eps", [0.01, 0.1, 0.3])
def test_fgsm_linear_margin_drop(eps):
    p = linear_model(W0, W1)
    rng = make_rng(1)
    x = rng.normal(size=(20, 4))
    y = rng.integers(0, 2, size=20)
    before = margin(p, x)
    after = margin(p, fgsm(p, x, y, eps))
    drop = eps * np.abs(W1 - W0).sum()
    expected = np.where(y == 1, before - drop, before + drop)
    np.testing.assert_allclose(after, expected, rtol=0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.integers(0, 1000))
def test_fgsm_stays_in_ball(eps, seed):
    p = linear_model(W0, W1)
    rng = make_rng(seed)
    x = rng.normal(size=(5, 4))
    out = fgsm(p, x, rng.integers(0, 2, size=5), eps)
    assert np.max(np.abs(out - x)) <= eps + 1e-12


def test_pgd_zero_budget_is_identity(small_model, gauss_data):
    _, te = gauss_data
    out = pgd(small_model, te.x, te.y, AttackSpec("PGD", 0.0))
    assert out.tobytes() == te.x.tobytes()


@pytest.mark.parametrize("eps", [0.05, 0.1, 0.3])
def test_single_step_pgd_equals_fgsm(small_model, gauss_data, eps):
    _, te = gauss_data
    a = pgd(small_model, te.x, te.y, AttackSpec("PGD", eps, alpha=eps, iters=1))
    b = fgsm(small_model, te.x, te.y, eps)
    assert a.tobytes() == b.tobytes()
    a = pgd(small_model, te.x, te.y, AttackSpec("PGD", eps, alpha=2 * eps, iters=1))
    assert a.tobytes() == b.tobytes()


def test_linear_pgd_reaches_corner():
    # the sign gradient of a linear model is constant, so PGD walks straight to the corner
    p = linear_model(W0, W1)
    x = make_rng(2).normal(size=(6, 4))
    y = np.array([0, 1, 0, 1, 1, 0])
    eps, alpha = 0.095, 0.01
    iterates = []
    out = pgd(p, x, y, AttackSpec("PGD", eps, alpha, iters=math.ceil(eps / alpha)),
              callback=lambda t, xt: iterates.append(xt.copy()))
    np.testing.assert_array_equal(out, fgsm(p, x, y, eps))
    assert len(iterates) == 11
    # before reaching the corner, the loss increases at every step
    losses = [per_sample_loss(p, xt, y) for xt in iterates]
    for a, b in zip(losses, losses[1:]):
        assert np.all(b > a)


def test_pgd_iterates_contained(small_model, gauss_data):
    _, te = gauss_data
    eps = 0.07
    worst = []
    pgd(small_model, te.x, te.y, AttackSpec("PGD", eps, alpha=0.03, iters=8),
        callback=lambda t, xt: worst.append(np.max(np.abs(xt - te.x))))
    assert len(worst) == 9
    assert max(worst) <= eps + 1e-12


def test_pgd_random_start_deterministic(small_model, gauss_data):
    _, te = gauss_data
    spec = AttackSpec("PGD", 0.1, random_start=True, start_seed=4)
    a = pgd(small_model, te.x, te.y, spec)
    b = pgd(small_model, te.x, te.y, spec)
    assert a.tobytes() == b.tobytes()
    assert np.max(np.abs(a - te.x)) <= 0.1 + 1e-12


def test_pgd_spec_validation():
    with pytest.raises(ValueError):
        AttackSpec("PGD", 0.1, iters=0)
    with pytest.raises(ValueError):
        AttackSpec("PGD", 0.1, alpha=0)
    with pytest.raises(ValueError):
        AttackSpec("CW")
    with pytest.raises(ValueError):
        pgd(linear_model([1.0], [0.0]), [[0.0]], [0], AttackSpec("FGSM"))


@pytest.mark.parametrize("x,c,eps,expected", [
    ([0.5], [0.0], 0.1, [0.1]),
    ([-0.5], [0.0], 0.1, [-0.1]),
    ([0.05, -0.2, 0.3], [0.0, 0.0, 0.25], 0.1, [0.05, -0.1, 0.3]),
])
def test_project_examples(x, c, eps, expected):
    np.testing.assert_allclose(project_linf(c, np.array(x), eps), expected, rtol=0, atol=1e-15)


finite = st.floats(-10, 10, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, 6, elements=finite), arrays(np.float64, 6, elements=finite), st.floats(0, 5))
def test_project_idempotent_and_contained(c, x, eps):
    once = project_linf(c, x, eps)
    assert np.all(np.abs(once - c) <= eps + 1e-12)
    np.testing.assert_array_equal(project_linf(c, once, eps), once)
    inside = np.abs(x - c) <= eps
    np.testing.assert_array_equal(once[inside], x[inside])


def test_sweep_single_point(small_model, gauss_data):
    _, te = gauss_data
    curve = sweep(small_model, te, AttackSpec("FGSM"), [0.0])
    assert curve.ri is None
    assert curve.accuracies[0] == evaluate(small_model, te).accuracy


def test_sweep_deterministic_and_anchored(small_model, gauss_data):
    _, te = gauss_data
    grid = epsilon_grid(0.3, 10)
    for kind in ("FGSM", "PGD"):
        a = sweep(small_model, te, AttackSpec(kind), grid)
        b = sweep(small_model, te, AttackSpec(kind), grid)
        assert a.accuracies.tobytes() == b.accuracies.tobytes()
        assert a.accuracies[0] == evaluate(small_model, te).accuracy
        assert a.metadata["kind"] == kind and "epsilon" not in a.metadata
        assert a.metadata["norm"] == "linf"


def test_sweep_keep_evaluations(small_model, gauss_data):
    _, te = gauss_data
    curve, evals = sweep(small_model, te, AttackSpec("FGSM"), [0, 0.1], keep_evaluations=True)
    assert [e.accuracy for e in evals] == curve.accuracies.tolist()


def test_sweep_empty_dataset(small_model):
    with pytest.raises(ValueError):
        sweep(small_model, Dataset(np.zeros((0, 6)), np.zeros(0), list("abcdef")), AttackSpec(), [0, 0.1])


def test_attack_raises_loss_on_linear_model():
    p = linear_model(W0, W1)
    rng = make_rng(5)
    x = rng.normal(size=(50, 4))
    y = rng.integers(0, 2, size=50)
    base = per_sample_loss(p, x, y)
    for spec in (AttackSpec("FGSM", 0.05), AttackSpec("PGD", 0.05)):
        assert np.all(per_sample_loss(p, attack(p, x, y, spec), y) > base)


def test_fgsm_mostly_raises_loss_on_mlp(small_model, gauss_data):
    _, te = gauss_data
    base = per_sample_loss(small_model, te.x, te.y)
    adv = per_sample_loss(small_model, fgsm(small_model, te.x, te.y, 0.05), te.y)
    assert np.mean(adv >= base) >= 0.95


def test_non_finite_gradient_raises():
    p = ModelParams([np.array([[np.inf, 0.0]])], [np.zeros(2)])
    with pytest.raises(AttackError), np.errstate(invalid="ignore"):
        fgsm(p, [[1.0]], [0], 0.1)
