"""
Checking the numerics against independent oracles
=================================================

Each quantity the toolkit computes has a slower or closed-form counterpart.
This walks through them one at a time.
"""

import numpy as np

from tabrobust import AttackSpec, fgsm, init_params, pgd, robustness_index
from tabrobust.data import make_rng
from tabrobust.explain import model_output, shapley_exact
from tabrobust.model import ModelParams, grad_input, per_sample_loss

rng = make_rng(0)

# input gradients vs central differences
p = init_params(5, 2, seed=0, hidden=(8,))
x, y = rng.normal(size=5), 1
h = 1e-4
fd = np.array([(per_sample_loss(p, x + h * e, y) - per_sample_loss(p, x - h * e, y)).item() / (2 * h)
               for e in np.eye(5)])
print("backprop   ", np.round(grad_input(p, x, y), 6))
print("finite diff", np.round(fd, 6))

# RI of a straight line from 1 to 0 is one half
eps = np.linspace(0, 0.3, 10)
print("\nRI of 1 - eps/0.3:", robustness_index(eps, 1 - eps / 0.3))

# one PGD step that overshoots the ball lands exactly on the FGSM point
xs = rng.normal(size=(100, 5))
ys = rng.integers(0, 2, 100)
same = np.array_equal(pgd(p, xs, ys, AttackSpec("PGD", 0.1, alpha=0.5, iters=1)), fgsm(p, xs, ys, 0.1))
print("single-step PGD == FGSM:", same)

# Shapley values of a linear log-odds are w * (x - mean(background))
W = rng.normal(size=(5, 2))
lin = ModelParams([W], [np.zeros(2)])
bg = rng.normal(size=(30, 5))
phi = shapley_exact(model_output(lin, "log_odds"), x, bg).phi
closed = (W[:, 1] - W[:, 0]) * (x - bg.mean(axis=0))
print("max |phi - closed form|:", np.max(np.abs(phi - closed)))
