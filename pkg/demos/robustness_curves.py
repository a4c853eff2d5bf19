"""
Accuracy under attack and the Robustness Index
==============================================

Train a small MLP on two Gaussian blobs, then sweep FGSM and PGD over ten
budgets in [0, 0.3] and summarize each curve by its normalized area.
"""

import numpy as np

from tabrobust import (AttackSpec, TrainConfig, apply_normalizer, epsilon_grid, evaluate, fit_normalizer, pgd, split,
                       sweep, synth_gaussian, train)
from tabrobust.metrics import curve_slope_at_zero, taylor_ri_estimate

# 2000 rows, 10 features, class means 1.0 apart per coordinate
raw = synth_gaussian(2000, 10, 1.0, seed=0)
tr, te = split(raw, 0.8, seed=0)

# statistics come from the training split only
nz = fit_normalizer(tr)
tr, te = apply_normalizer(nz, tr), apply_normalizer(nz, te)

params, history = train(tr, TrainConfig(seed=0))
print(f"final training loss {history.loss[-1]:.4f}, clean test accuracy {evaluate(params, te).accuracy:.3f}")

grid = epsilon_grid(0.3, 10)
for kind in ("FGSM", "PGD"):
    curve = sweep(params, te, AttackSpec(kind), grid)
    print(f"\n{kind}")
    for eps, acc in zip(curve.epsilons, curve.accuracies):
        print(f"  eps {eps:.3f}  acc {acc:.3f}  " + "#" * int(40 * acc))
    slope = curve_slope_at_zero(curve)
    print(f"  RI {curve.ri:.3f}  (first-order estimate {taylor_ri_estimate(curve.accuracies[0], slope, 0.3):.3f})")

# PGD takes ten steps of 0.01, so it cannot move further than 0.1 from x;
# beyond that budget its curve flattens while FGSM keeps falling.
print("\nlargest PGD displacement:",
      np.max(np.abs(pgd(params, te.x, te.y, AttackSpec("PGD", 0.3)) - te.x)))
