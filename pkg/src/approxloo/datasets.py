"""Synthetic logistic-regression data and the bundled 200-row fixture."""

from __future__ import annotations

import json
from importlib import resources

import numpy as np

from .model import Dataset, expit

FIXTURE_CSV = "synthetic_200.csv"
FIXTURE_META = "synthetic_200.json"


def make_synthetic_logistic(n: int, theta, seed=0, names=None) -> Dataset:
    """Draw ``X ~ N(0, I)`` and ``y ~ Bernoulli(expit(alpha + X beta))``.

    ``theta = [alpha, beta_1, ..., beta_p]``.
    """
    theta = np.asarray(theta, dtype=float)
    p = theta.shape[0] - 1
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    prob = expit(theta[0] + X @ theta[1:])
    y = (rng.random(n) < prob).astype(float)
    return Dataset(X, y, names or tuple(f"x{j + 1}" for j in range(p)))


def fixture_path():
    return resources.files("approxloo").joinpath("data", FIXTURE_CSV)


def fixture_parameters() -> dict:
    """Generating parameters and seed of the bundled fixture."""
    text = resources.files("approxloo").joinpath("data", FIXTURE_META).read_text()
    return json.loads(text)


def load_fixture() -> Dataset:
    """The 200-row synthetic fixture (columns x1, x2, x3 and outcome y)."""
    from .io import ingest_csv

    with resources.as_file(fixture_path()) as path:
        data, _ = ingest_csv(path, "y", ["x1", "x2", "x3"])
    return data
