import numpy as np
import pytest

from lsengine.errors import FormatError, PropagationError, TableError
from lsengine.hap_cache import cache_from_matrix
from lsengine.kernels import KernelConfig, backward, forward
from lsengine.params import calc_rho, make_parameters
from lsengine.tables import (
    BackwardTable, ForwardTable, copy_table, load_table, make_backward_table,
    make_forward_table, reset_table, save_table,
)

from conftest import random_haps

CFG = KernelConfig(n_threads=1)


@pytest.fixture
def setup(rng):
    cache_from_matrix(random_haps(rng, 12, 30))
    return make_parameters(rho=calc_rho(rng.uniform(0, 0.5, 29)), mu=1e-2)


def test_new_tables(setup):
    f = make_forward_table(setup)
    b = make_backward_table(setup, 3, 7)
    assert f.l is None and f.is_full and f.width == 12
    assert b.width == 5 and not b.is_full
    assert f.slab.flags.f_contiguous and f.columns.flags.c_contiguous
    assert "uninitialised" in str(f)
    assert "rescaled probability space" in str(b)


def test_memory_n300(rng):
    cache_from_matrix(random_haps(rng, 300, 10))
    f = make_forward_table(make_parameters())
    assert f.slab.nbytes == 8 * 300 * 300 == 720_000
    assert "Memory consumed: 722.40 kB" in str(f)


def test_window_errors(setup):
    with pytest.raises(TableError):
        make_forward_table(setup, 5, 4)
    with pytest.raises(TableError):
        make_forward_table(setup, 0, 12)
    with pytest.raises(TableError):
        make_backward_table(setup, -1)


def test_copy_then_advance(setup):
    f = make_forward_table(setup)
    forward(f, setup, 10, CFG)
    f2 = make_forward_table(setup)
    copy_table(f2, f)
    forward(f2, setup, cfg=CFG)
    assert (f.l, f2.l) == (10, 11)
    snapshot = f.slab.copy()
    copy_table(f, f)
    np.testing.assert_array_equal(f.slab, snapshot)


def test_copy_errors(setup):
    f = make_forward_table(setup)
    with pytest.raises(TableError):
        copy_table(make_forward_table(setup, 0, 5), f)
    with pytest.raises(TableError):
        copy_table(make_backward_table(setup), f)


def test_reset(setup):
    f = make_forward_table(setup, 2, 9)
    h = f.pars_hash
    forward(f, setup, 5, CFG)
    reset_table(f)
    reset_table(f)
    assert f.l is None and (f.from_recipient, f.to_recipient, f.pars_hash) == (2, 9, h)
    forward(f, setup, 5, CFG)  # allowed again after reset


def test_checkpoint_roundtrip(setup, tmp_path):
    f = make_forward_table(setup, 1, 10)
    forward(f, setup, 17, CFG)
    b = make_backward_table(setup)
    path = tmp_path / "t.lstb"
    save_table(path, b)
    b2 = load_table(path)
    assert isinstance(b2, BackwardTable) and b2.l is None
    save_table(path, f)
    f2 = load_table(path)
    assert isinstance(f2, ForwardTable)
    assert (f2.l, f2.from_recipient, f2.to_recipient, f2.pars_hash) == (17, 1, 10, f.pars_hash)
    np.testing.assert_array_equal(f2.slab, f.slab)
    np.testing.assert_array_equal(f2.scale, f.scale)
    # resumes exactly where the original would
    forward(f, setup, 25, CFG)
    forward(f2, setup, 25, CFG)
    np.testing.assert_array_equal(f2.slab, f.slab)


def test_checkpoint_errors(setup, tmp_path):
    path = tmp_path / "t.lstb"
    save_table(path, make_forward_table(setup))
    raw = path.read_bytes()
    path.write_bytes(raw[:-3])
    with pytest.raises(FormatError):
        load_table(path)
    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError, match="magic"):
        load_table(path)


def test_table_tied_to_parameters(setup, rng):
    f = make_forward_table(setup)
    other = make_parameters(mu=0.1)
    with pytest.raises(PropagationError, match="hash"):
        forward(f, other, 3, CFG)
