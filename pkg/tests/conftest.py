"""Shared fixtures: deterministic datasets and optional classic-data paths."""

import os

import numpy as np
import pytest

from ebggm.hiw import DatasetStats

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")

# Published correlation structure of a classic 6-variable bone-measurement
# study (n=276); used to synthesize a surrogate dataset with this exact
# sample correlation matrix.  The surrogate is NOT the classic raw data.
BONES_CORR = np.array([
    [1.000, 0.505, 0.569, 0.602, 0.621, 0.603],
    [0.505, 1.000, 0.422, 0.467, 0.482, 0.450],
    [0.569, 0.422, 1.000, 0.926, 0.877, 0.878],
    [0.602, 0.467, 0.926, 1.000, 0.874, 0.894],
    [0.621, 0.482, 0.877, 0.874, 1.000, 0.937],
    [0.603, 0.450, 0.878, 0.894, 0.937, 1.000],
])
BONES_N = 276


def synth_with_scatter(scatter, n, rng):
    """Data matrix with zero column means and exactly this scatter.

    Orthonormalize a random centered matrix and recolor it, so that
    X'X = scatter and each column sums to zero.
    """
    scatter = np.asarray(scatter, dtype=float)
    p = scatter.shape[0]
    left = np.linalg.cholesky(scatter)
    g = rng.standard_normal((n, p))
    g -= g.mean(axis=0)
    q, _ = np.linalg.qr(g)
    return q @ left.T


@pytest.fixture(scope="session")
def bones_surrogate():
    """276 x 6 surrogate with the published correlation matrix, exactly."""
    data = synth_with_scatter((BONES_N - 1) * BONES_CORR, BONES_N,
                              np.random.default_rng(20240908))
    return DatasetStats.from_data(data, center=True, standardize=True)


def classic_csv(name):
    """Path of a user-supplied classic dataset, or None if not provided."""
    path = os.path.join(DATA_DIR, name)
    return path if os.path.exists(path) else None
