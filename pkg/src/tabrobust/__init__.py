"""Adversarial robustness and explanation stability for tabular MLP classifiers."""

__version__ = "0.1.0"

from .attacks import AttackSpec, epsilon_grid, fgsm, pgd, project_linf, sweep  # noqa: E402
from .data import (Dataset, RawDataset, apply_normalizer, fit_normalizer, load_csv, split,  # noqa: E402
                   synth_gaussian)
from .metrics import RobustnessCurve, robustness_index  # noqa: E402
from .model import ModelParams, TrainConfig, evaluate, forward, init_params, train  # noqa: E402

__all__ = [
    "AttackSpec", "epsilon_grid", "fgsm", "pgd", "project_linf", "sweep",
    "Dataset", "RawDataset", "apply_normalizer", "fit_normalizer", "load_csv", "split", "synth_gaussian",
    "RobustnessCurve", "robustness_index",
    "ModelParams", "TrainConfig", "evaluate", "forward", "init_params", "train",
]
