"""Adversarial training by online batch augmentation, and the baseline-vs-hardened ablation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .attacks import FGSM, PGD, AttackSpec, attack, sweep
from .data import Dataset
from .metrics import RobustnessCurve
from .model import TrainConfig, evaluate, train

__all__ = ["AdvTrainConfig", "AblationRow", "AblationRecord", "augmenter", "adv_train", "run_ablation"]

BALL_TOL = 1e-12


@dataclass
class AdvTrainConfig:
    base: TrainConfig = field(default_factory=TrainConfig)
    adv_fraction: float = 0.2
    adv_epsilon: float = 0.05
    attack: str = FGSM
    augment_mode: str = "replace"
    # PGD augmentation only
    alpha: float = 0.01
    iters: int = 10

    def __post_init__(self):
        self.attack = self.attack.upper()
        if not 0 <= self.adv_fraction <= 1:
            raise ValueError("adv_fraction must lie in [0, 1]")
        if self.adv_epsilon < 0:
            raise ValueError("adv_epsilon must be >= 0")
        if self.attack not in (FGSM, PGD):
            raise ValueError(f"unknown augmentation attack {self.attack!r}")
        if self.augment_mode not in ("replace", "append"):
            raise ValueError("augment_mode must be 'replace' or 'append'")

    def attack_spec(self) -> AttackSpec:
        return AttackSpec(self.attack, self.adv_epsilon, self.alpha, self.iters)

    def to_dict(self) -> dict:
        return {"base": self.base.to_dict(), "adv_fraction": self.adv_fraction,
                "adv_epsilon": self.adv_epsilon, "attack": self.attack,
                "augment_mode": self.augment_mode, "alpha": self.alpha, "iters": self.iters}


def augmenter(config: AdvTrainConfig):
    """Batch hook for :func:`~tabrobust.model.train` that injects adversarial samples.

    floor(adv_fraction * batch) samples, picked with the hook's own PRNG stream,
    are crafted against the current parameters using their true labels. They
    replace the originals in place, or are appended in ``append`` mode.
    """
    spec = config.attack_spec()

    def augment(params, xb, yb, rng):
        k = math.floor(config.adv_fraction * len(yb))
        if k == 0:
            return xb, yb
        pick = rng.choice(len(yb), size=k, replace=False)
        x_adv = attack(params, xb[pick], yb[pick], spec)
        if np.max(np.abs(x_adv - xb[pick])) > config.adv_epsilon + BALL_TOL:
            raise RuntimeError("augmented sample left the epsilon ball")
        if config.augment_mode == "append":
            return np.concatenate([xb, x_adv]), np.concatenate([yb, yb[pick]])
        xb = xb.copy()
        xb[pick] = x_adv
        return xb, yb

    return augment


def adv_train(data: Dataset, config: AdvTrainConfig):
    """Adversarially augmented training; identical to ``train`` when no sample is perturbed."""
    return train(data, config.base, batch_hook=augmenter(config))


@dataclass
class AblationRow:
    dataset: str
    model: str
    clean_acc: float
    ri_fgsm: float
    ri_pgd: float
    delta_ri: float | None  # adv RI_PGD - baseline RI_PGD, adv rows only

    def to_dict(self) -> dict:
        return {"Dataset": self.dataset, "Model": self.model, "CleanAcc": self.clean_acc,
                "RI_FGSM": self.ri_fgsm, "RI_PGD": self.ri_pgd, "DeltaRI": self.delta_ri}


@dataclass
class AblationRecord:
    rows: list[AblationRow]
    curves: dict[str, RobustnessCurve]  # "<model>/<attack>" -> seed-mean curve
    per_seed: list[dict] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)

    def row(self, model: str) -> AblationRow:
        return next(r for r in self.rows if r.model == model)

    def to_dict(self) -> dict:
        return {"rows": [r.to_dict() for r in self.rows],
                "curves": {k: c.to_dict() for k, c in self.curves.items()},
                "per_seed": self.per_seed, "seeds": list(self.seeds)}


def _variant(name, params, test, spec_fgsm, spec_pgd, grid):
    cf = sweep(params, test, spec_fgsm, grid)
    cp = sweep(params, test, spec_pgd, grid)
    return {"model": name, "clean_acc": evaluate(params, test).accuracy,
            "ri_fgsm": cf.ri, "ri_pgd": cp.ri, "curve_fgsm": cf, "curve_pgd": cp}


def _mean_curve(curves, kind, meta) -> RobustnessCurve:
    return RobustnessCurve(curves[0].epsilons, np.mean([c.accuracies for c in curves], axis=0), kind, meta)


def run_ablation(train_data: Dataset, test_data: Dataset, base_config: TrainConfig,
                 adv_config: AdvTrainConfig | None, spec_fgsm: AttackSpec, spec_pgd: AttackSpec,
                 grid, seeds=None, dataset: str = "dataset") -> AblationRecord:
    """Train baseline (and, unless ``adv_config`` is None, hardened) models per seed.

    Both variants share each seed, so the clean-accuracy gap comes from the
    augmentation alone. Reported rows are means across seeds.
    """
    seeds = list(seeds) if seeds is not None else [base_config.seed]
    if not seeds:
        raise ValueError("need at least one seed")
    variants = {"Baseline": [], "Adv-Trained": []}
    for s in seeds:
        cfg = TrainConfig(**{**base_config.to_dict(), "seed": s})
        params, _ = train(train_data, cfg)
        variants["Baseline"].append(_variant("Baseline", params, test_data, spec_fgsm, spec_pgd, grid))
        if adv_config is not None:
            acfg = AdvTrainConfig(**{**adv_config.to_dict(), "base": cfg})
            aparams, _ = adv_train(train_data, acfg)
            variants["Adv-Trained"].append(_variant("Adv-Trained", aparams, test_data, spec_fgsm, spec_pgd, grid))

    rows, curves, per_seed = [], {}, []
    base_pgd = None
    for name, runs in variants.items():
        if not runs:
            continue
        for s, r in zip(seeds, runs):
            per_seed.append({"seed": s, "model": name, "CleanAcc": r["clean_acc"],
                             "RI_FGSM": r["ri_fgsm"], "RI_PGD": r["ri_pgd"]})
        ri_pgd = float(np.mean([r["ri_pgd"] for r in runs]))
        delta = None if name == "Baseline" else ri_pgd - base_pgd
        if name == "Baseline":
            base_pgd = ri_pgd
        rows.append(AblationRow(dataset, name, float(np.mean([r["clean_acc"] for r in runs])),
                                float(np.mean([r["ri_fgsm"] for r in runs])), ri_pgd, delta))
        meta = {"model": name, "seeds": seeds, "aggregate": "mean"}
        curves[f"{name}/FGSM"] = _mean_curve([r["curve_fgsm"] for r in runs], FGSM,
                                             {**meta, **runs[0]["curve_fgsm"].metadata})
        curves[f"{name}/PGD"] = _mean_curve([r["curve_pgd"] for r in runs], PGD,
                                            {**meta, **runs[0]["curve_pgd"].metadata})
    return AblationRecord(rows, curves, per_seed, seeds)
