import numpy as np
import pytest

from tabrobust.data import apply_normalizer, fit_normalizer, split, synth_gaussian
from tabrobust.model import ModelParams, TrainConfig, train

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split()[0])):
        status, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"[{status}] criterion {key}: {detail}")


def linear_model(w0, w1, b=(0.0, 0.0)):
    """Binary softmax regression with logits (x @ w0 + b0, x @ w1 + b1)."""
    W = np.column_stack([w0, w1]).astype(float)
    return ModelParams([W], [np.asarray(b, dtype=float)])


@pytest.fixture(scope="session")
def gauss_data():
    raw = synth_gaussian(600, 6, 1.5, seed=3)
    tr, te = split(raw, 0.8, seed=3)
    nz = fit_normalizer(tr)
    return apply_normalizer(nz, tr), apply_normalizer(nz, te)


@pytest.fixture(scope="session")
def small_model(gauss_data):
    tr, _ = gauss_data
    params, _ = train(tr, TrainConfig(epochs=5, seed=1, hidden=(16, 8)))
    return params
