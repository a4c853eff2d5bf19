"""L-infinity bounded FGSM / PGD evasion attacks and epsilon sweeps.

Attacks run in standardized feature space, are untargeted (they ascend the
loss of the true label) and use per-sample input gradients. ``sign(0) = 0``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .data import Dataset, make_rng
from .metrics import RobustnessCurve
from .model import ModelParams, evaluate_arrays, grad_input

__all__ = [
    "AttackError",
    "AttackSpec",
    "epsilon_grid",
    "validate_grid",
    "project_linf",
    "fgsm",
    "pgd",
    "attack",
    "sweep",
]

FGSM, PGD = "FGSM", "PGD"


class AttackError(RuntimeError):
    """The model produced a non-finite gradient."""


@dataclass
class AttackSpec:
    kind: str = FGSM
    epsilon: float = 0.1
    alpha: float = 0.01
    iters: int = 10
    random_start: bool = False
    start_seed: int = 0  # only consumed by random_start

    def __post_init__(self):
        self.kind = self.kind.upper()
        if self.kind not in (FGSM, PGD):
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")
        if self.kind == PGD and (self.iters < 1 or not self.alpha > 0):
            raise ValueError("PGD needs iters >= 1 and alpha > 0")

    def with_epsilon(self, epsilon: float) -> "AttackSpec":
        return AttackSpec(self.kind, float(epsilon), self.alpha, self.iters, self.random_start, self.start_seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["norm"] = "linf"
        return d


def epsilon_grid(eps_max: float = 0.3, steps: int = 10) -> np.ndarray:
    """``steps`` evenly spaced budgets from 0 to ``eps_max`` inclusive."""
    if steps < 1 or (steps > 1 and not eps_max > 0):
        raise ValueError("need steps >= 1 and eps_max > 0")
    return validate_grid(np.linspace(0.0, eps_max, steps))


def validate_grid(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=np.float64).ravel()
    if g.size == 0 or g[0] != 0 or not np.all(np.isfinite(g)) or np.any(np.diff(g) <= 0):
        raise ValueError("epsilon grid must be finite, start at 0 and strictly increase")
    return g


def project_linf(center, point, epsilon: float) -> np.ndarray:
    """Clamp ``point`` coordinate-wise into [center - eps, center + eps].

    Written as a clamp on absolute bounds so that a step which overshoots the
    ball lands on exactly the same float as ``center + eps * sign``.
    """
    center = np.asarray(center, dtype=np.float64)
    return np.clip(point, center - epsilon, center + epsilon)


def _signed_grad(params, x, y) -> np.ndarray:
    g = grad_input(params, x, y)
    if not np.all(np.isfinite(g)):
        raise AttackError("non-finite input gradient; the model is numerically unstable")
    return np.sign(g)


def fgsm(params: ModelParams, x, y, epsilon: float) -> np.ndarray:
    """x + eps * sign(grad_x loss)."""
    if not epsilon >= 0:
        raise ValueError("epsilon must be >= 0")
    x = np.asarray(x, dtype=np.float64)
    return x + epsilon * _signed_grad(params, x, y)


def pgd(params: ModelParams, x, y, spec: AttackSpec, callback=None) -> np.ndarray:
    """Iterated sign-gradient ascent projected back onto the eps-ball around ``x``.

    ``callback(t, x_t)`` is invoked on every iterate, including the start point.
    """
    if spec.kind != PGD:
        raise ValueError("pgd() requires an AttackSpec of kind PGD")
    x = np.asarray(x, dtype=np.float64)
    eps = spec.epsilon
    if spec.random_start and eps > 0:
        rng = make_rng(spec.start_seed)
        xt = project_linf(x, x + rng.uniform(-eps, eps, size=x.shape), eps)
    else:
        xt = x.copy()
    if callback is not None:
        callback(0, xt)
    for t in range(1, spec.iters + 1):
        xt = project_linf(x, xt + spec.alpha * _signed_grad(params, xt, y), eps)
        if callback is not None:
            callback(t, xt)
    return xt


def attack(params: ModelParams, x, y, spec: AttackSpec) -> np.ndarray:
    if spec.kind == FGSM:
        return fgsm(params, x, y, spec.epsilon)
    return pgd(params, x, y, spec)


def sweep(params: ModelParams, data: Dataset, spec: AttackSpec, grid, positive_class: int = 1,
          keep_evaluations: bool = False):
    """Attack every sample at each budget in ``grid`` and record accuracy.

    Returns a :class:`RobustnessCurve`; with ``keep_evaluations`` also a list
    of per-epsilon :class:`~tabrobust.model.Evaluation` objects.
    """
    grid = validate_grid(grid)
    if data.n == 0:
        raise ValueError("cannot sweep an empty dataset")
    accs, evals = [], []
    for eps in grid:
        x_adv = attack(params, data.x, data.y, spec.with_epsilon(eps))
        ev = evaluate_arrays(params, x_adv, data.y, positive_class)
        accs.append(ev.accuracy)
        if keep_evaluations:
            evals.append(ev)
    meta = {k: v for k, v in spec.to_dict().items() if k != "epsilon"}
    curve = RobustnessCurve(grid, np.array(accs), spec.kind, meta)
    return (curve, evals) if keep_evaluations else curve
