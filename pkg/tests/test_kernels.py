import numpy as np
import pytest

from lsengine.errors import PropagationError
from lsengine.hap_cache import cache_from_matrix
from lsengine.kernels import (
    KernelConfig, backward, check_bounds, default_threads, detect_lane_width, forward,
    select_kernel,
)
from lsengine.oracle import oracle_run
from lsengine.params import calc_rho, make_parameters
from lsengine.tables import make_backward_table, make_forward_table, reset_table

from conftest import engine_posteriors, random_dense_pi, random_haps

CFG = KernelConfig(n_threads=1)


def test_first_variant_hand_value():
    # variant 0 alleles: recipient 0 carries 0, donors carry 0 and 1
    cache_from_matrix([[0, 0, 1], [1, 1, 1]])
    pars = make_parameters(mu=0.1)
    assert pars.pi.value == 0.5
    f = make_forward_table(pars)
    forward(f, pars, 0, CFG)
    assert f.l == 0
    np.testing.assert_allclose(f.alpha[:, 0], [0.0, 0.45, 0.05], rtol=1e-15)
    assert f.alpha_f[0] == pytest.approx(0.5)


def test_backward_first_call_all_ones(rng):
    cache_from_matrix(random_haps(rng, 9, 6))
    pars = make_parameters()
    b = make_backward_table(pars)
    backward(b, pars, cfg=CFG)
    assert b.l == 5
    assert np.all(b.beta == 1.0)
    backward(b, pars, cfg=CFG)
    assert b.l == 4


def test_backward_one_step_hand_value():
    cache_from_matrix([[1, 1, 0], [0, 0, 1]])
    pars = make_parameters(rho=[0.5], mu=0.1)
    b = make_backward_table(pars)
    backward(b, pars, 0, CFG)
    # recipient 0 at the last variant: theta = (., 0.9, 0.1), G = 0.5 * (0.9 + 0.1)
    np.testing.assert_allclose(b.beta[:, 0], [0.0, 1.4, 0.6], rtol=1e-15)
    assert b.beta_g[0] == pytest.approx(0.5)


def test_backward_twice_on_400_variants(rng):
    cache_from_matrix(random_haps(rng, 30, 400))
    pars = make_parameters()
    b = make_backward_table(pars)
    backward(b, pars, cfg=CFG)
    backward(b, pars, cfg=CFG)
    assert b.l == 398


def test_forward_to_250(rng):
    cache_from_matrix(random_haps(rng, 30, 400))
    pars = make_parameters(rho=calc_rho(rng.uniform(0, 0.05, 399)), mu=1e-3)
    f = make_forward_table(pars)
    forward(f, pars, 250, CFG)
    assert f.l == 250 and "Current variant = 250" in str(f)


def test_no_recombination_matches_oracle(rng):
    m = random_haps(rng, 8, 16)
    cache_from_matrix(m)
    pars = make_parameters(mu=0.05)
    ref = oracle_run(m, pars).raw_alpha
    f = make_forward_table(pars)
    for l in range(16):
        forward(f, pars, l, CFG)
        want = ref[l] / ref[l].sum(axis=0)
        got = f.alpha / f.alpha.sum(axis=0)
        np.testing.assert_allclose(got, want.astype(float), rtol=1e-12, atol=0)


def test_direction_and_range_errors(rng):
    cache_from_matrix(random_haps(rng, 6, 10))
    pars = make_parameters()
    f = make_forward_table(pars)
    forward(f, pars, 5, CFG)
    with pytest.raises(PropagationError, match="backwards"):
        forward(f, pars, 3, CFG)
    with pytest.raises(PropagationError):
        forward(f, pars, 5, CFG)
    with pytest.raises(PropagationError, match="out of range"):
        forward(f, pars, 10, CFG)
    b = make_backward_table(pars)
    backward(b, pars, 4, CFG)
    with pytest.raises(PropagationError, match="forwards"):
        backward(b, pars, 7, CFG)


def test_multistep_equals_single_steps(rng):
    cache_from_matrix(random_haps(rng, 37, 40))
    pars = make_parameters(rho=calc_rho(rng.uniform(0, 1, 39)), mu=1e-3)
    a, b = make_forward_table(pars), make_forward_table(pars)
    forward(a, pars, 30, CFG)
    for _ in range(31):
        forward(b, pars, cfg=CFG)
    assert b.l == 30
    assert a.slab.tobytes() == b.slab.tobytes()
    ba, bb = make_backward_table(pars), make_backward_table(pars)
    backward(ba, pars, 3, CFG)
    while bb.l != 3:
        backward(bb, pars, cfg=CFG)
    assert ba.slab.tobytes() == bb.slab.tobytes()


@pytest.mark.parametrize("unroll", [1, 4, 8])
def test_unroll_does_not_change_bits(rng, unroll):
    cache_from_matrix(random_haps(rng, 77, 20))
    pars = make_parameters(rho=calc_rho(rng.uniform(0, 1, 19)), mu=1e-3)
    ref = make_forward_table(pars)
    forward(ref, pars, 19, KernelConfig(n_threads=1, unroll=4, lane_width=4))
    f = make_forward_table(pars)
    forward(f, pars, 19, KernelConfig(n_threads=1, unroll=unroll, lane_width=4))
    assert f.slab.tobytes() == ref.slab.tobytes()


@pytest.mark.parametrize("lanes", [1, 2, 4, 8])
def test_lane_widths_agree(rng, lanes):
    cache_from_matrix(random_haps(rng, 150, 60))
    pars = make_parameters(rho=calc_rho(rng.uniform(0, 1, 59)), mu=1e-3)
    ref = engine_posteriors(pars, KernelConfig(n_threads=1, lane_width=1))
    got = engine_posteriors(pars, KernelConfig(n_threads=1, lane_width=lanes))
    for r, g in zip(ref, got):
        np.testing.assert_allclose(g.p, r.p, rtol=1e-13, atol=0)


@pytest.mark.parametrize("threads", [2, 3, 8, (0,)])
def test_threads_are_bitwise_identical(rng, threads):
    cache_from_matrix(random_haps(rng, 61, 25))
    pars = make_parameters(rho=calc_rho(rng.uniform(0, 1, 24)), mu=1e-3)
    a, b = make_forward_table(pars), make_forward_table(pars)
    forward(a, pars, 24, CFG)
    forward(b, pars, 24, KernelConfig(n_threads=threads))
    assert a.slab.tobytes() == b.slab.tobytes()
    ba, bb = make_backward_table(pars), make_backward_table(pars)
    backward(ba, pars, 0, CFG)
    backward(bb, pars, 0, KernelConfig(n_threads=threads))
    assert ba.slab.tobytes() == bb.slab.tobytes()


def test_four_kernel_paths_agree(rng):
    n, L = 40, 30
    cache_from_matrix(random_haps(rng, n, L))
    rho = calc_rho(rng.uniform(0, 1, L - 1))
    dense = (np.ones((n, n)) - np.eye(n)) / (n - 1)
    results = {}
    with pytest.warns(UserWarning):
        variants = {
            ("scalar", "uniform"): make_parameters(rho=rho, mu=1e-3),
            ("vector", "uniform"): make_parameters(rho=rho, mu=np.full(L, 1e-3)),
            ("scalar", "dense"): make_parameters(rho=rho, mu=1e-3, pi=dense),
            ("vector", "dense"): make_parameters(rho=rho, mu=np.full(L, 1e-3), pi=dense),
        }
    for key, pars in variants.items():
        assert select_kernel(pars.mu_kind, pars.pi_kind) == f"{key[0]}_mu/{key[1]}_pi"
        results[key] = engine_posteriors(pars, CFG)
    ref = results[("scalar", "uniform")]
    for key, res in results.items():
        for r, g in zip(ref, res):
            np.testing.assert_allclose(g.p, r.p, rtol=1e-13, atol=0)


def test_select_kernel_rejects_unknown():
    with pytest.raises(ValueError):
        select_kernel("scalar", "sparse")


def test_kernel_config_validation(monkeypatch):
    with pytest.raises(PropagationError):
        KernelConfig(n_threads=0)
    with pytest.raises(PropagationError):
        KernelConfig(unroll=3)
    with pytest.raises(PropagationError):
        KernelConfig(lane_width=16)
    with pytest.raises(PropagationError):
        KernelConfig(n_threads=(0, 0))
    monkeypatch.setenv("LS_ENGINE_THREADS", "3")
    assert default_threads() == 3 and KernelConfig().thread_count == 3
    monkeypatch.setenv("LS_ENGINE_THREADS", "zero")
    with pytest.raises(PropagationError):
        default_threads()
    assert detect_lane_width() in (1, 2, 4, 8)


def test_bounds_hold_stepwise(rng):
    n, L = 50, 80
    cache_from_matrix(random_haps(rng, n, L, lo=0.01, hi=0.2))
    pars = make_parameters(rho=calc_rho(rng.uniform(0, 2, L - 1)), mu=1e-4)
    f, b = make_forward_table(pars), make_backward_table(pars)
    for _ in range(L):
        forward(f, pars, cfg=CFG)
        backward(b, pars, cfg=CFG)
        assert f.alpha.max() <= 2
        assert b.beta.max() <= n
        check_bounds(f, pars)
        check_bounds(b, pars)


def test_reset_then_propagate_equals_fresh(rng):
    cache_from_matrix(random_haps(rng, 20, 30))
    pars = make_parameters(rho=calc_rho(rng.uniform(0, 1, 29)), mu=1e-3, pi=random_dense_pi(rng, 20))
    f = make_forward_table(pars)
    forward(f, pars, 29, CFG)
    reset_table(f)
    forward(f, pars, 12, CFG)
    fresh = make_forward_table(pars)
    forward(fresh, pars, 12, CFG)
    assert f.slab.tobytes() == fresh.slab.tobytes()
    assert f.scale.tobytes() == fresh.scale.tobytes()
