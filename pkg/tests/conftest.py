import csv

import numpy as np
import pytest

from rdtoolkit.sample import RdSample


def write_csv(path, header, rows, delimiter=","):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow(header)
        writer.writerows(rows)
    return str(path)


def make_sample(x, y, cutoff=0.0, received=None, covariates=None):
    return RdSample(score=np.asarray(x, dtype=float),
                    outcome=np.asarray(y, dtype=float),
                    cutoff=cutoff,
                    received=None if received is None
                    else np.asarray(received),
                    covariates=covariates or {})


@pytest.fixture
def step_sample():
    # Noiseless unit step at 0: y = 1[x >= 0], dense symmetric grid.
    x = np.linspace(-1, 1, 81)
    y = (x >= 0).astype(float)
    return make_sample(x, y)


@pytest.fixture
def noisy_sample():
    rng = np.random.default_rng(7)
    x = rng.uniform(-1, 1, 500)
    y = 0.5 * x + (x >= 0) * 1.0 + rng.normal(0, 0.3, 500)
    cov = {"age": rng.normal(0, 1, 500), "income": rng.normal(0, 1, 500)}
    return make_sample(x, y, received=(x >= 0).astype(int), covariates=cov)
