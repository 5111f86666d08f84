import os

# every propagation in the suite re-checks the analytic alpha/beta bounds
os.environ.setdefault("LS_ENGINE_CHECK_BOUNDS", "1")

import numpy as np
import pytest

from lsengine import hap_cache


@pytest.fixture(autouse=True)
def _fresh_cache():
    hap_cache.clear_cache()
    yield
    hap_cache.clear_cache()


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def random_haps(rng, n, L, lo=0.1, hi=0.5):
    freqs = rng.uniform(lo, hi, size=(L, 1))
    return (rng.random((L, n)) < freqs).astype(np.uint8)


def random_dense_pi(rng, n):
    pi = rng.dirichlet(np.ones(n - 1), size=n)  # one row per recipient
    out = np.zeros((n, n))
    for i in range(n):
        out[np.arange(n) != i, i] = pi[i]
    out /= out.sum(axis=0)
    return out


def engine_posteriors(pars, cfg=None, window=(0, None)):
    """Posterior slabs at every variant, from one forward and one backward sweep."""
    from lsengine.decode import post_probs
    from lsengine.kernels import backward, forward
    from lsengine.tables import copy_table, make_backward_table, make_forward_table

    L = pars.n_variants
    fwd = make_forward_table(pars, *window)
    bck = make_backward_table(pars, *window)
    fwds = []
    for l in range(L):
        forward(fwd, pars, l, cfg)
        snap = make_forward_table(pars, *window)
        copy_table(snap, fwd)
        fwds.append(snap)
    out = [None] * L
    for l in range(L - 1, -1, -1):
        backward(bck, pars, l, cfg)
        out[l] = post_probs(fwds[l], bck)
    return out
