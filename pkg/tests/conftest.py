import numpy as np
import pytest

from crbias.core import SurvivalDataset


def make_data(times, events, x=None, groups=None, n_risks=-1):
    times = np.asarray(times, dtype=float)
    n = times.size
    x = np.zeros((n, 0)) if x is None else np.asarray(x, dtype=float).reshape(n, -1)
    groups = np.zeros(n, dtype=int) if groups is None else groups
    return SurvivalDataset(np.arange(n).astype(str), x, groups, times, events, n_risks)


def random_competing(rng, n, p=2, censor=True, risks=2):
    """Small random dataset with exponential latent times and optional censoring."""
    x = rng.normal(size=(n, p))
    rates = np.exp(x @ rng.normal(scale=0.5, size=p))
    latent = np.column_stack([rng.exponential(1 / (rates * (r + 1) / 2)) for r in range(risks)])
    t = latent.min(axis=1)
    d = latent.argmin(axis=1) + 1
    if censor:
        c = rng.exponential(2.0, size=n)
        d = np.where(c < t, 0, d)
        t = np.minimum(t, c)
    return make_data(t, d, x, rng.integers(0, 2, n))


@pytest.fixture
def rng():
    return np.random.default_rng(20240613)
