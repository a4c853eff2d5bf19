"""Robustness Index and the extended classification metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

__all__ = [
    "RobustnessCurve",
    "robustness_index",
    "curve_slope_at_zero",
    "taylor_ri_estimate",
    "precision_recall",
    "roc_auc",
    "gradient_slope_correlation",
    "QUADRATURE",
]

QUADRATURE = "composite-trapezoid"


def _validate_grid(eps, acc):
    eps = np.asarray(eps, dtype=np.float64)
    acc = np.asarray(acc, dtype=np.float64)
    if eps.ndim != 1 or eps.shape != acc.shape:
        raise ValueError("epsilons and accuracies must be 1-D vectors of equal length")
    if len(eps) < 2:
        raise ValueError("a robustness curve needs at least 2 points")
    if eps[0] != 0:
        raise ValueError("epsilon grid must start at 0")
    if np.any(np.diff(eps) <= 0):
        raise ValueError("epsilon grid must be strictly increasing")
    return eps, acc


def robustness_index(curve_or_eps, accuracies=None) -> float:
    """Normalized area under the accuracy-epsilon curve.

    Trapezoid rule over the sampled points, divided by the largest epsilon.
    Accepts either a :class:`RobustnessCurve` or ``(epsilons, accuracies)``.
    """
    if accuracies is None:
        eps, acc = curve_or_eps.epsilons, curve_or_eps.accuracies
    else:
        eps, acc = curve_or_eps, accuracies
    eps, acc = _validate_grid(eps, acc)
    ri = float(np.trapezoid(acc, eps) / eps[-1])
    # guard against 1-ulp excursions outside the attainable range
    return min(max(ri, float(acc.min())), float(acc.max()))


def curve_slope_at_zero(curve_or_eps, accuracies=None) -> float:
    """Forward difference of accuracy between the first two grid points."""
    if accuracies is None:
        eps, acc = curve_or_eps.epsilons, curve_or_eps.accuracies
    else:
        eps, acc = curve_or_eps, accuracies
    eps = np.asarray(eps, dtype=np.float64)
    acc = np.asarray(acc, dtype=np.float64)
    if len(eps) < 2 or len(acc) < 2:
        raise ValueError("slope needs at least 2 points")
    return float((acc[1] - acc[0]) / (eps[1] - eps[0]))


def taylor_ri_estimate(acc0: float, slope: float, eps_max: float) -> float:
    """First-order estimate acc0 + eps_max * slope / 2, clamped to [0, 1]."""
    if eps_max <= 0:
        raise ValueError("eps_max must be positive")
    return float(min(1.0, max(0.0, acc0 + 0.5 * eps_max * slope)))


@dataclass
class RobustnessCurve:
    epsilons: np.ndarray
    accuracies: np.ndarray
    attack_kind: str = "FGSM"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.epsilons, self.accuracies = _validate_grid_lenient(self.epsilons, self.accuracies)
        if np.any((self.accuracies < 0) | (self.accuracies > 1)):
            raise ValueError("accuracies must lie in [0, 1]")

    @property
    def ri(self) -> float | None:
        """Robustness Index, or None for a single-point curve."""
        if len(self.epsilons) < 2:
            return None
        return robustness_index(self)

    def to_dict(self) -> dict:
        return {
            "attack": self.attack_kind,
            "epsilons": self.epsilons.tolist(),
            "accuracies": self.accuracies.tolist(),
            "ri": self.ri,
            "quadrature": QUADRATURE,
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RobustnessCurve":
        return cls(np.array(d["epsilons"]), np.array(d["accuracies"]), d["attack"], dict(d.get("metadata", {})))


def _validate_grid_lenient(eps, acc):
    # single-point curves are legal containers, they just have no RI
    eps = np.asarray(eps, dtype=np.float64)
    acc = np.asarray(acc, dtype=np.float64)
    if eps.ndim != 1 or eps.shape != acc.shape or len(eps) == 0:
        raise ValueError("epsilons and accuracies must be non-empty 1-D vectors of equal length")
    if eps[0] != 0 or np.any(np.diff(eps) <= 0):
        raise ValueError("epsilon grid must start at 0 and be strictly increasing")
    return eps, acc


def precision_recall(predictions, labels, positive_class: int = 1) -> tuple[float, float]:
    """Binary precision and recall; a zero denominator yields 0."""
    pred = np.asarray(predictions)
    lab = np.asarray(labels)
    if pred.size == 0 or pred.shape != lab.shape:
        raise ValueError("predictions and labels must be non-empty and the same shape")
    pp = pred == positive_class
    ap = lab == positive_class
    tp = np.count_nonzero(pp & ap)
    precision = tp / np.count_nonzero(pp) if pp.any() else 0.0
    recall = tp / np.count_nonzero(ap) if ap.any() else 0.0
    return float(precision), float(recall)


def roc_auc(scores, labels, positive_class: int = 1) -> float:
    """Mann-Whitney AUC; tied scores count one half."""
    s = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(labels) == positive_class
    n_pos = np.count_nonzero(pos)
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs both classes present")
    ranks = stats.rankdata(s)  # average ranks handle ties
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def gradient_slope_correlation(grad_l1_means, slopes) -> float:
    """Pearson r between mean input-gradient L1 norms and curve slopes across models.

    Descriptive only; the local-linearity argument predicts a negative value
    (larger gradients, steeper decline).
    """
    a = np.asarray(grad_l1_means, dtype=np.float64)
    b = np.asarray(slopes, dtype=np.float64)
    if len(a) < 3 or np.ptp(a) == 0 or np.ptp(b) == 0:
        return float("nan")
    return float(stats.pearsonr(a, b)[0])
