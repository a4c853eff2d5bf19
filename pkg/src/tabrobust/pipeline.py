"""End-to-end evaluation pipeline shared by the command-line tool and the demos.

A :class:`RunConfig` carries the default protocol: 80/20 split, 64-32 MLP
trained with Adam (lr 1e-3, batch 128, 20 epochs), ten budgets in [0, 0.3],
PGD with alpha 0.01 for 10 steps, three seeds, 20% FGSM augmentation at
eps 0.05 and 256-sample explainability subsets.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .advtrain import AdvTrainConfig, run_ablation
from .attacks import FGSM, PGD, AttackSpec, epsilon_grid, fgsm, sweep
from .data import (DataError, RawDataset, apply_normalizer, fit_normalizer, load_csv, make_rng, split,
                   synth_gaussian)
from .explain import (MAX_EXACT_FEATURES, attribution_drift, drift_grid, feature_sensitivity, select_background,
                      sensitivity_drift_spearman)
from .metrics import (RobustnessCurve, curve_slope_at_zero, gradient_slope_correlation, precision_recall,
                      robustness_index, roc_auc, taylor_ri_estimate)
from .model import TrainConfig, evaluate_arrays, grad_input, train
from .report import RunReport, file_sha256

log = logging.getLogger(__name__)

OUT_ENV = "TABROBUST_OUT"


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass
class RunConfig:
    data: str | None = None
    label_col: str = "label"
    synthetic: dict | None = None  # {"n", "d", "separation", "seed"} instead of a CSV
    max_rows: int | None = None
    split: float = 0.8
    split_seed: int = 0
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    learning_rate: float = 0.001
    batch_size: int = 128
    epochs: int = 20
    hidden: list = field(default_factory=lambda: [64, 32])
    attacks: list = field(default_factory=lambda: ["fgsm", "pgd"])
    eps_max: float = 0.3
    eps_steps: int = 10
    alpha: float = 0.01
    iters: int = 10
    random_start: bool = False
    positive_class: int = 1
    metrics_eps: float = 0.1
    explain_samples: int = 256
    background: int = 100
    permutations: int = 100
    drift_eps: float = 0.1
    drift_attack: str = "fgsm"
    attribution_output: str = "proba"
    top_k: int = 10
    exact: bool = False
    adv_frac: float = 0.2
    adv_eps: float = 0.05
    adv_attack: str = "fgsm"
    augment_mode: str = "replace"
    baseline_only: bool = False
    out: str = field(default_factory=lambda: os.environ.get(OUT_ENV, "tabrobust-out"))
    timestamp: str | None = None

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        self.seeds = [int(s) for s in self.seeds]
        self.attacks = [a.lower() for a in self.attacks]
        bad = set(self.attacks) - {"fgsm", "pgd"}
        if bad or not self.attacks:
            raise ConfigError(f"attacks must be drawn from fgsm, pgd (got {self.attacks})")
        if self.data is None and self.synthetic is None:
            raise ConfigError("either a dataset (--data) or --synthetic is required")
        if not 0 < self.split < 1:
            raise ConfigError(f"split must lie in (0, 1), got {self.split}")
        if self.eps_steps < 2:
            raise ConfigError("the epsilon grid needs at least 2 points to define a Robustness Index")
        try:
            self.train_config(self.seeds[0])
            self.attack_spec("pgd")
            self.adv_config(self.train_config(self.seeds[0]))
            epsilon_grid(self.eps_max, self.eps_steps)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_mapping(cls, mapping: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**mapping)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return asdict(self)

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.batch_size, self.epochs, seed, hidden=tuple(self.hidden))

    def attack_spec(self, kind: str, epsilon: float = 0.0) -> AttackSpec:
        return AttackSpec(kind.upper(), epsilon, self.alpha, self.iters, self.random_start)

    def adv_config(self, base: TrainConfig) -> AdvTrainConfig:
        return AdvTrainConfig(base, self.adv_frac, self.adv_eps, self.adv_attack.upper(), self.augment_mode,
                              self.alpha, self.iters)

    def grid(self) -> np.ndarray:
        return epsilon_grid(self.eps_max, self.eps_steps)


def _dataset_name(cfg: RunConfig) -> str:
    if cfg.data:
        return Path(cfg.data).stem
    return "synthetic"


class Pipeline:
    """Loads and splits the data once and caches one trained model per seed."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        # the output location does not affect results, so it stays out of the report
        settings = {k: v for k, v in cfg.to_dict().items() if k != "out"}
        self.provenance = {"tool_version": __version__, "timestamp": cfg.timestamp, "config": settings}
        raw = self._load()
        tr, te = split(raw, cfg.split, cfg.split_seed)
        self.normalizer = fit_normalizer(tr)
        self.train_data = apply_normalizer(self.normalizer, tr)
        self.test_data = apply_normalizer(self.normalizer, te)
        self.provenance.update({
            "split": {"train_fraction": cfg.split, "seed": cfg.split_seed, "n_train": tr.n, "n_test": te.n},
            "label_mapping": {name: k for k, name in enumerate(raw.classes)},
            "normalizer": self.normalizer.to_dict(),
            "seeds": list(cfg.seeds),
        })
        self._models = {}
        self._histories = {}

    def _load(self) -> RawDataset:
        cfg = self.cfg
        if cfg.data:
            raw = load_csv(cfg.data, cfg.label_col)
            self.provenance["dataset"] = {"path": str(cfg.data), "sha256": file_sha256(cfg.data),
                                          "rows": raw.n, "features": raw.d}
        else:
            s = dict(cfg.synthetic)
            raw = synth_gaussian(int(s["n"]), int(s["d"]), float(s["separation"]), int(s.get("seed", 0)))
            self.provenance["dataset"] = {"synthetic": s, "rows": raw.n, "features": raw.d}
        if cfg.max_rows is not None and raw.n > cfg.max_rows:
            keep = np.sort(make_rng(cfg.split_seed, 99).permutation(raw.n)[:cfg.max_rows])
            raw = raw.take(keep)
            self.provenance["dataset"]["subsampled_to"] = cfg.max_rows
        if len(raw.classes) < 2:
            raise DataError("dataset needs at least 2 classes")
        return raw

    @property
    def name(self) -> str:
        return _dataset_name(self.cfg)

    def model(self, seed: int):
        if seed not in self._models:
            log.info("training seed %d", seed)
            self._models[seed], self._histories[seed] = train(self.train_data, self.cfg.train_config(seed))
        return self._models[seed]

    def history(self, seed: int):
        self.model(seed)
        return self._histories[seed]

    def curves(self) -> dict:
        """Per-seed and seed-mean robustness curves for every configured attack."""
        cfg, grid = self.cfg, self.cfg.grid()
        out = {}
        for kind in cfg.attacks:
            per_seed = [sweep(self.model(s), self.test_data, cfg.attack_spec(kind), grid, cfg.positive_class)
                        for s in cfg.seeds]
            for s, c in zip(cfg.seeds, per_seed):
                c.metadata.update({"seed": s, "dataset": self.name})
                out[f"{kind.upper()}/seed{s}"] = c
            mean = np.mean([c.accuracies for c in per_seed], axis=0)
            out[f"{kind.upper()}/mean"] = RobustnessCurve(
                grid, mean, kind.upper(), {**per_seed[0].metadata, "seed": None, "seeds": cfg.seeds,
                                           "aggregate": "mean"})
        return out

    def extended_metrics(self, curves: dict) -> list[dict]:
        """Precision, recall, AUC and accuracy under FGSM at ``metrics_eps``, plus RI summaries."""
        cfg = self.cfg
        rows = []
        if self.test_data.n_classes == 2 and len(np.unique(self.test_data.y)) == 2:
            acc, prec, rec, auc = [], [], [], []
            for s in cfg.seeds:
                params = self.model(s)
                x_adv = fgsm(params, self.test_data.x, self.test_data.y, cfg.metrics_eps)
                ev = evaluate_arrays(params, x_adv, self.test_data.y, cfg.positive_class)
                p, r = precision_recall(ev.predictions, self.test_data.y, cfg.positive_class)
                acc.append(ev.accuracy)
                prec.append(p)
                rec.append(r)
                auc.append(roc_auc(ev.scores, self.test_data.y, cfg.positive_class))
            for name, vals in (("accuracy", acc), ("precision", prec), ("recall", rec), ("auc", auc)):
                rows.append({"metric": name, "value": float(np.mean(vals)), "epsilon": cfg.metrics_eps,
                             "attack": FGSM})
        for key, c in curves.items():
            if not key.endswith("/mean"):
                continue
            slope = curve_slope_at_zero(c)
            rows.append({"metric": "clean_accuracy", "value": float(c.accuracies[0]), "epsilon": 0.0,
                         "attack": c.attack_kind})
            rows.append({"metric": "ri", "value": robustness_index(c), "epsilon": float(c.epsilons[-1]),
                         "attack": c.attack_kind})
            rows.append({"metric": "slope_at_zero", "value": slope, "epsilon": 0.0, "attack": c.attack_kind})
            rows.append({"metric": "taylor_ri_estimate",
                         "value": taylor_ri_estimate(c.accuracies[0], slope, float(c.epsilons[-1])),
                         "epsilon": float(c.epsilons[-1]), "attack": c.attack_kind})
        return rows

    def gradient_diagnostic(self, curves: dict) -> dict:
        """Mean input-gradient L1 norm vs FGSM slope across the seed models (descriptive)."""
        if "fgsm" not in self.cfg.attacks:
            return {}
        norms, slopes = [], []
        for s in self.cfg.seeds:
            g = grad_input(self.model(s), self.test_data.x, self.test_data.y)
            norms.append(float(np.abs(g).sum(axis=1).mean()))
            slopes.append(curve_slope_at_zero(curves[f"FGSM/seed{s}"]))
        r = gradient_slope_correlation(norms, slopes)
        return {"grad_l1_means": norms, "fgsm_slopes": slopes, "pearson_r": None if np.isnan(r) else r}

    def explain(self):
        cfg = self.cfg
        seed = cfg.seeds[0]
        params = self.model(seed)
        if cfg.exact and self.test_data.d > MAX_EXACT_FEATURES:
            raise ConfigError(f"--exact supports at most {MAX_EXACT_FEATURES} features, data has "
                              f"{self.test_data.d}; drop --exact to use the permutation estimator")
        n = min(cfg.explain_samples, self.test_data.n)
        if n < cfg.explain_samples:
            log.warning("test split has %d rows; explaining all of them", n)
        sens = feature_sensitivity(params, self.test_data, n, seed)
        background = select_background(self.train_data, cfg.background, seed)
        kw = dict(n_samples=n, seed=seed, n_permutations=cfg.permutations, exact=cfg.exact,
                  output=cfg.attribution_output, positive_class=cfg.positive_class)
        dspec = cfg.attack_spec(cfg.drift_attack, cfg.drift_eps)
        dphi = attribution_drift(params, self.test_data, dspec, background, **kw)
        grid = drift_grid(params, self.test_data, dspec, cfg.grid(), background, top_k=cfg.top_k, **kw)
        rho = sensitivity_drift_spearman(sens.s, dphi)
        return sens, dphi, grid, rho

    def ablation(self):
        cfg = self.cfg
        base = cfg.train_config(cfg.seeds[0])
        adv = None if cfg.baseline_only else cfg.adv_config(base)
        return run_ablation(self.train_data, self.test_data, base, adv, cfg.attack_spec(FGSM),
                            cfg.attack_spec(PGD), cfg.grid(), cfg.seeds, self.name)


def full_report(pipe: Pipeline, explain: bool = True, ablation: bool = True) -> tuple[RunReport, dict]:
    """Run every stage and assemble the report; also returns the raw stage objects."""
    curves = pipe.curves()
    parts = {"curves": curves}
    report = RunReport(provenance=pipe.provenance, curves=[dict(c.to_dict(), key=k) for k, c in curves.items()])
    report.metrics = pipe.extended_metrics(curves)
    report.extra["gradient_slope_diagnostic"] = pipe.gradient_diagnostic(curves)
    report.extra["histories"] = {str(s): pipe.history(s).to_dict() for s in pipe.cfg.seeds}
    if explain:
        sens, dphi, grid, rho = pipe.explain()
        parts.update(sensitivity=sens, delta_phi=dphi, drift=grid)
        report.sensitivity = dict(sens.to_dict(), spearman_vs_drift=rho)
        report.drift = dict(grid.to_dict(), delta_phi=dphi.tolist(), delta_phi_epsilon=pipe.cfg.drift_eps,
                            attribution_output=pipe.cfg.attribution_output,
                            estimator="exact" if pipe.cfg.exact else "permutation")
    if ablation:
        rec = pipe.ablation()
        parts["ablation"] = rec
        report.ablation = rec.to_dict()
    return report, parts


def write_config(cfg: RunConfig, out_dir: Path) -> Path:
    path = out_dir / "effective_config.json"
    path.write_text(json.dumps(cfg.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path
