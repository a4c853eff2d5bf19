"""Gradient sensitivity, interventional Shapley values and attribution drift.

The Shapley value function is the interventional (marginal) one: a coalition's
worth is the model output averaged over background rows, with features outside
the coalition taken from the background row. ``shapley_exact`` enumerates all
coalitions and serves as the oracle for the permutation estimator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np
from scipy import stats

from .attacks import AttackSpec, attack, validate_grid
from .data import Dataset, fisher_yates, make_rng
from .model import ModelParams, grad_input, logits

__all__ = [
    "MAX_EXACT_FEATURES",
    "SensitivityReport",
    "Attribution",
    "DriftReport",
    "model_output",
    "subsample_indices",
    "select_background",
    "feature_sensitivity",
    "shapley_exact",
    "shapley_sample",
    "attribution_drift",
    "drift_grid",
    "sensitivity_drift_spearman",
]

MAX_EXACT_FEATURES = 12
_CHUNK_ROWS = 400_000


@dataclass
class SensitivityReport:
    s: np.ndarray
    feature_names: list[str]
    n_samples: int
    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def ranking(self) -> np.ndarray:
        return np.argsort(-self.s, kind="stable")

    def to_dict(self) -> dict:
        return {"S_i": self.s.tolist(), "feature_names": list(self.feature_names),
                "n_samples": self.n_samples, "sample_indices": self.indices.tolist()}


@dataclass
class Attribution:
    phi: np.ndarray
    base_value: float
    output_value: float
    stderr: np.ndarray | None = None  # permutation estimator only

    @property
    def efficiency_residual(self) -> float:
        return float(self.phi.sum() + self.base_value - self.output_value)


@dataclass
class DriftReport:
    epsilons: np.ndarray
    grid: np.ndarray  # len(epsilons) x d
    feature_names: list[str]
    top_k: np.ndarray
    sample_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    attack: str = "FGSM"

    @property
    def delta_phi(self) -> np.ndarray:
        """Drift at the largest budget."""
        return self.grid[-1]

    def to_dict(self) -> dict:
        return {
            "attack": self.attack,
            "epsilons": self.epsilons.tolist(),
            "grid": self.grid.tolist(),
            "feature_names": list(self.feature_names),
            "top_k": self.top_k.tolist(),
            "sample_indices": self.sample_indices.tolist(),
        }


def model_output(params: ModelParams, output: str = "proba", positive_class: int = 1):
    """Scalar model output used as the Shapley payoff.

    ``"proba"`` is the positive-class probability; ``"log_odds"`` is
    ``z_pos - logsumexp(z_other)``, which is affine in x for a linear model.
    """
    others = [k for k in range(params.n_classes) if k != positive_class]

    def proba(x):
        z = logits(params, x)
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e[..., positive_class] / e.sum(axis=-1)

    def log_odds(x):
        z = logits(params, x)
        zo = z[..., others]
        m = zo.max(axis=-1)
        return z[..., positive_class] - (m + np.log(np.exp(zo - m[..., None]).sum(axis=-1)))

    if output == "proba":
        return proba
    if output == "log_odds":
        return log_odds
    raise ValueError(f"unknown attribution output {output!r}")


def subsample_indices(n: int, k: int, seed: int) -> np.ndarray:
    if k < 1 or k > n:
        raise ValueError(f"cannot draw {k} samples from {n}")
    return fisher_yates(n, make_rng(seed))[:k]


def select_background(data: Dataset, size: int = 100, seed: int = 0) -> np.ndarray:
    """Seeded background rows (all rows when the set is smaller than ``size``)."""
    return data.x[subsample_indices(data.n, min(size, data.n), seed)]


def feature_sensitivity(params: ModelParams, data: Dataset, n_samples: int = 256, seed: int = 0) -> SensitivityReport:
    """Mean absolute per-sample input gradient of the loss, per feature."""
    if data.n == 0:
        raise ValueError("empty dataset")
    idx = subsample_indices(data.n, n_samples, seed)
    g = grad_input(params, data.x[idx], data.y[idx])
    return SensitivityReport(np.abs(g).mean(axis=0), list(data.feature_names), len(idx), idx)


def _eval_chunked(predict, rows: np.ndarray) -> np.ndarray:
    flat = rows.reshape(-1, rows.shape[-1])
    if len(flat) <= _CHUNK_ROWS:
        out = predict(flat)
    else:
        out = np.concatenate([predict(flat[i:i + _CHUNK_ROWS]) for i in range(0, len(flat), _CHUNK_ROWS)])
    return out.reshape(rows.shape[:-1])


def _check_background(x, background):
    x = np.asarray(x, dtype=np.float64).ravel()
    bg = np.atleast_2d(np.asarray(background, dtype=np.float64))
    if bg.shape[0] == 0:
        raise ValueError("background set is empty")
    if bg.shape[1] != x.shape[0]:
        raise ValueError("background and input disagree on feature count")
    return x, bg


def shapley_exact(predict, x, background) -> Attribution:
    """Exact Shapley values by enumerating all 2^d coalitions."""
    x, bg = _check_background(x, background)
    d = x.shape[0]
    if d > MAX_EXACT_FEATURES:
        raise ValueError(f"exact Shapley is limited to {MAX_EXACT_FEATURES} features (got {d}); "
                         "use shapley_sample")
    masks = np.arange(2**d)
    bits = ((masks[:, None] >> np.arange(d)) & 1).astype(bool)
    hybrid = np.where(bits[:, None, :], x, bg[None, :, :])
    worth = _eval_chunked(predict, hybrid).mean(axis=1)

    sizes = bits.sum(axis=1)
    weight = np.array([factorial(s) * factorial(d - s - 1) / factorial(d) for s in range(d)])
    phi = np.empty(d)
    for i in range(d):
        without = masks[~bits[:, i]]
        phi[i] = np.sum(weight[sizes[without]] * (worth[without | (1 << i)] - worth[without]))
    return Attribution(phi, float(worth[0]), float(worth[-1]))


def shapley_sample(predict, x, background, n_permutations: int = 100, seed: int = 0) -> Attribution:
    """Permutation-sampling Shapley estimate.

    Each permutation is paired with one uniformly drawn background row and walks
    the features in order, crediting each with its marginal change in output.
    """
    if n_permutations < 1:
        raise ValueError("n_permutations must be >= 1")
    x, bg = _check_background(x, background)
    d = x.shape[0]
    rng = make_rng(seed)
    perms = rng.permuted(np.tile(np.arange(d), (n_permutations, 1)), axis=1)
    rows = rng.integers(0, bg.shape[0], size=n_permutations)
    rank = np.argsort(perms, axis=1)  # rank[p, j]: position of feature j in permutation p

    contrib = np.empty((n_permutations, d))
    step = max(1, _CHUNK_ROWS // (d + 1))
    prefix = np.arange(d + 1)
    for s in range(0, n_permutations, step):
        r = rank[s:s + step]
        mask = r[:, None, :] < prefix[None, :, None]  # (p, d+1, d)
        hybrid = np.where(mask, x, bg[rows[s:s + step]][:, None, :])
        vals = _eval_chunked(predict, hybrid)
        contrib[s:s + step] = (np.take_along_axis(vals, r + 1, axis=1)
                               - np.take_along_axis(vals, r, axis=1))

    phi = contrib.mean(axis=0)
    if n_permutations > 1:
        stderr = contrib.std(axis=0, ddof=1) / np.sqrt(n_permutations)
    else:
        stderr = np.zeros(d)
    base = float(predict(bg).mean())
    return Attribution(phi, base, float(predict(x[None])[0]), stderr)


def _sample_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def _attribute_many(predict, xs, background, seeds, n_permutations, exact):
    if exact:
        return np.array([shapley_exact(predict, x, background).phi for x in xs])
    return np.array([shapley_sample(predict, x, background, n_permutations, s).phi
                     for x, s in zip(xs, seeds)])


def _drift_setup(params, data, n_samples, seed, output, positive_class):
    if data.n == 0:
        raise ValueError("empty dataset")
    idx = subsample_indices(data.n, n_samples, seed)
    seeds = [_sample_seed(seed, i) for i in idx]
    return idx, seeds, model_output(params, output, positive_class)


def attribution_drift(params: ModelParams, data: Dataset, spec: AttackSpec, background, n_samples: int = 256,
                      seed: int = 0, n_permutations: int = 100, exact: bool = False,
                      output: str = "proba", positive_class: int = 1) -> np.ndarray:
    """Mean absolute change of each feature's Shapley value under ``spec``.

    Clean and attacked inputs share the per-sample estimator seed, so the
    difference reflects the input change rather than sampling noise.
    """
    idx, seeds, predict = _drift_setup(params, data, n_samples, seed, output, positive_class)
    x, y = data.x[idx], data.y[idx]
    x_adv = attack(params, x, y, spec)
    phi = _attribute_many(predict, x, background, seeds, n_permutations, exact)
    phi_adv = _attribute_many(predict, x_adv, background, seeds, n_permutations, exact)
    return np.abs(phi_adv - phi).mean(axis=0)


def drift_grid(params: ModelParams, data: Dataset, spec: AttackSpec, grid, background, top_k: int = 10,
               n_samples: int = 256, seed: int = 0, n_permutations: int = 100, exact: bool = False,
               output: str = "proba", positive_class: int = 1) -> DriftReport:
    """Drift at every budget of ``grid``; features ranked by drift at the largest budget."""
    grid = validate_grid(grid)
    idx, seeds, predict = _drift_setup(params, data, n_samples, seed, output, positive_class)
    x, y = data.x[idx], data.y[idx]
    phi = _attribute_many(predict, x, background, seeds, n_permutations, exact)
    rows = []
    for eps in grid:
        if eps == 0:
            rows.append(np.zeros(data.d))
            continue
        x_adv = attack(params, x, y, spec.with_epsilon(eps))
        phi_adv = _attribute_many(predict, x_adv, background, seeds, n_permutations, exact)
        rows.append(np.abs(phi_adv - phi).mean(axis=0))
    table = np.array(rows)
    top = np.argsort(-table[-1], kind="stable")[:min(top_k, data.d)]
    return DriftReport(grid, table, list(data.feature_names), top, idx, spec.kind)


def sensitivity_drift_spearman(s, delta_phi) -> float | None:
    """Spearman rank correlation between sensitivity and drift (None if undefined)."""
    s = np.asarray(s, dtype=np.float64)
    dphi = np.asarray(delta_phi, dtype=np.float64)
    if len(s) < 2 or np.ptp(s) == 0 or np.ptp(dphi) == 0:
        return None
    return float(stats.spearmanr(s, dphi)[0])
