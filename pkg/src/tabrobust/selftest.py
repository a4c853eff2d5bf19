"""Offline oracle checks on synthetic data, run by ``tabrobust selftest``.

Each check compares an implementation path against an independent oracle
(finite differences, closed forms, enumeration). ``inject_fault`` corrupts the
input gradient seen by the finite-difference check so the harness itself can
be shown to fail.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attacks import PGD, AttackSpec, epsilon_grid, fgsm, pgd
from .data import apply_normalizer, fit_normalizer, make_rng, split, synth_gaussian
from .explain import model_output, shapley_exact
from .metrics import robustness_index
from .model import (ModelParams, TrainConfig, activation_pattern, grad_input, grad_params, init_params, loss,
                    per_sample_loss, train)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _random_net(rng, d, hidden=(6, 5), classes=3):
    p = init_params(d, classes, int(rng.integers(1 << 30)), hidden)
    # nonzero biases so kinks are not aligned with the origin
    return ModelParams(p.weights, [rng.normal(0, 0.3, b.shape) for b in p.biases])


def _fd_relerr(f, x, analytic, pattern=None, h=1e-3):
    """Max relative error of ``analytic`` vs central differences of ``f`` w.r.t. ``x`` (mutated in place).

    Coordinates whose stencil flips a ReLU (per ``pattern()``) are skipped.
    """
    num = np.empty_like(x)
    keep = np.ones(x.size, dtype=bool)
    flat, nflat = x.ravel(), num.ravel()
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f()
        pu = pattern() if pattern else None
        flat[i] = old - h
        down = f()
        pd = pattern() if pattern else None
        flat[i] = old
        nflat[i] = (up - down) / (2 * h)
        if pattern and not np.array_equal(pu, pd):
            keep[i] = False
    a, n = analytic.ravel()[keep], nflat[keep]
    if a.size == 0:
        return 0.0
    scale = np.maximum(np.abs(n), np.abs(a)).max()
    return float(np.abs(n - a).max() / max(scale, 1e-12))


def check_gradients(inject_fault=False, n_nets=5, seed=0) -> CheckResult:
    rng = make_rng(seed, 1)
    worst = 0.0
    for _ in range(n_nets):
        d = int(rng.integers(2, 6))
        p = _random_net(rng, d)
        x = rng.normal(size=(4, d))
        y = rng.integers(0, 3, size=4)
        gi = grad_input(p, x, y)
        if inject_fault:
            gi = gi * 1.05
        for k in range(len(y)):
            xk = x[k].copy()
            worst = max(worst, _fd_relerr(lambda: float(per_sample_loss(p, xk, y[k])), xk, gi[k],
                                          lambda: activation_pattern(p, xk)))
        gp = grad_params(p, x, y)
        for arr, g in zip(p.arrays(), gp.arrays()):
            worst = max(worst, _fd_relerr(lambda: loss(p, x, y), arr, g, lambda: activation_pattern(p, x)))
    return CheckResult("finite-difference gradients", worst <= 1e-4, f"max relative error {worst:.2e}")


def check_shapley(seed=0) -> CheckResult:
    rng = make_rng(seed, 2)
    d = 6
    w = rng.normal(size=d)
    bg = rng.normal(size=(20, d))
    x = rng.normal(size=d)
    att = shapley_exact(lambda z: z @ w + 0.5, x, bg)
    err = np.abs(att.phi - w * (x - bg.mean(axis=0))).max()
    p = _random_net(rng, d, classes=2)
    eff = abs(shapley_exact(model_output(p), x, bg).efficiency_residual)
    ok = err <= 1e-9 and eff <= 1e-9
    return CheckResult("exact Shapley closed form and efficiency", ok, f"linear err {err:.1e}, efficiency {eff:.1e}")


def check_trapezoid() -> CheckResult:
    eps = np.linspace(0, 0.3, 10)
    err = abs(robustness_index(eps, 1 - eps / 0.3) - 0.5)
    err_c = abs(robustness_index(eps, np.full(10, 0.74)) - 0.74)
    return CheckResult("Robustness Index quadrature", max(err, err_c) <= 1e-12, f"linear {err:.1e}, constant {err_c:.1e}")


def check_attacks(seed=0) -> CheckResult:
    raw = synth_gaussian(300, 4, 2.0, seed)
    tr, te = split(raw, 0.8, seed)
    nz = fit_normalizer(tr)
    tr, te = apply_normalizer(nz, tr), apply_normalizer(nz, te)
    params, _ = train(tr, TrainConfig(epochs=3, seed=seed, hidden=(16, 8)))
    worst = 0.0
    same = True
    for eps in epsilon_grid():
        xf = fgsm(params, te.x, te.y, eps)
        worst = max(worst, np.abs(xf - te.x).max() - eps)

        def cb(t, xt, eps=eps):
            nonlocal worst
            worst = max(worst, np.abs(xt - te.x).max() - eps)

        pgd(params, te.x, te.y, AttackSpec(PGD, eps, 0.01, 10), callback=cb)
        one = pgd(params, te.x, te.y, AttackSpec(PGD, eps, max(eps, 0.01), 1))
        same &= np.array_equal(one, xf)
    ok = worst <= 1e-12 and same
    return CheckResult("L-inf ball containment and PGD(1 step) == FGSM", ok,
                       f"max excess {worst:.1e}, single-step equality {same}")


def run_selftest(inject_fault: bool = False) -> list[CheckResult]:
    return [check_gradients(inject_fault), check_shapley(), check_trapezoid(), check_attacks()]
