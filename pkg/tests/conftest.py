import numpy as np
import pytest

from cocomb import from_aggregation, from_availability


def random_system(rng, n_max=12):
    """A random constraint system with 1-4 constrained and 2-8 free variables."""
    n_b = int(rng.integers(2, 9))
    n_u = int(rng.integers(1, min(4, n_max - n_b) + 1))
    if rng.random() < 0.5:
        a = rng.integers(0, 2, size=(n_u, n_b)).astype(float)
    else:
        a = np.round(rng.uniform(-1.5, 1.5, size=(n_u, n_b)), 2)
    labels = [f"u{k}" for k in range(n_u)] + [f"b{k}" for k in range(n_b)]
    return from_aggregation(a, labels)


def random_availability(rng, n, p, balanced):
    if balanced:
        return np.ones((n, p), dtype=bool)
    while True:
        mask = rng.random((n, p)) < 0.6
        if mask.any(axis=1).all() and mask.any(axis=0).all() and not mask.all():
            return mask


def random_panel(rng, sys, p_max=6, balanced=None):
    p = int(rng.integers(2, p_max + 1))
    if balanced is None:
        balanced = bool(rng.random() < 0.5)
    avail = random_availability(rng, sys.n, p, balanced)
    values = rng.standard_normal(int(avail.sum()))
    return from_availability(avail, sys, values=values)


def random_spd(rng, m, lo=0.5, hi=3.0):
    q, _ = np.linalg.qr(rng.standard_normal((m, m)))
    eigs = rng.uniform(lo, hi, size=m)
    w = (q * eigs) @ q.T
    return 0.5 * (w + w.T)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
