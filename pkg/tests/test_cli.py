import numpy as np
import pytest

from lsengine import cli
from lsengine.decode import read_matrix_bin, read_matrix_csv
from lsengine.io_formats import write_hapgz

from conftest import random_haps


@pytest.fixture
def hapfile(tmp_path, rng):
    m = random_haps(rng, 30, 60)
    p = tmp_path / "d.hap.gz"
    write_hapgz(p, m)
    np.savetxt(tmp_path / "map.txt", np.cumsum(rng.uniform(0, 0.5, 60)))
    return p, m


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cache_info(capsys, hapfile):
    code, out, _ = run(capsys, "cache-info", "--input", hapfile[0])
    assert code == 0 and "30 haplotypes, each with 60 variants" in out


def test_query_is_one_based(capsys, hapfile):
    p, m = hapfile
    code, out, _ = run(capsys, "query", "--input", p, "--variants", "42,54", "--haps", "1:10")
    assert code == 0
    got = np.array([[int(x) for x in line.split()] for line in out.strip().splitlines()])
    np.testing.assert_array_equal(got, m[[41, 53], :10])


def test_query_range_error(capsys, hapfile):
    code, _, err = run(capsys, "query", "--input", hapfile[0], "--variants", "0")
    assert code != 0 and err.startswith("error LSE_USAGE:") and err.count("\n") == 1


def test_decode_csv_and_bin(capsys, hapfile, tmp_path):
    p, _ = hapfile
    base = ["decode", "--input", p, "--map", tmp_path / "map.txt", "--mu", "1e-3", "--variant", "25"]
    code, out, _ = run(capsys, *base, "--out", tmp_path / "d.csv")
    assert code == 0 and "Current variant = 24" in out
    d, labels = read_matrix_csv(tmp_path / "d.csv")
    assert labels[0] == "1" and np.array_equal(d, d.T) and not np.diag(d).any()
    code, _, _ = run(capsys, *base, "--out", tmp_path / "d.bin", "--out-format", "bin", "--threads", "3")
    assert code == 0
    dm = read_matrix_bin(tmp_path / "d.bin")
    assert dm.variant == 24 and dm.d.tobytes() == d.tobytes()


def test_decode_output_is_reproducible(capsys, hapfile, tmp_path):
    p, _ = hapfile
    outs = []
    for i in range(2):
        code, _, _ = run(capsys, "decode", "--input", p, "--variant", "7", "--mu", "0.01",
                         "--out", tmp_path / f"r{i}.bin", "--out-format", "bin")
        assert code == 0
        outs.append((tmp_path / f"r{i}.bin").read_bytes())
    assert outs[0] == outs[1]


def test_decode_first_variant(capsys, hapfile, tmp_path):
    code, _, _ = run(capsys, "decode", "--input", hapfile[0], "--variant", "1", "--out", tmp_path / "x.csv")
    assert code == 0


def test_windowed_distance_rejected(capsys, hapfile):
    code, _, err = run(capsys, "decode", "--input", hapfile[0], "--variant", "5",
                       "--from", "10", "--to", "19", "--dist")
    assert code != 0 and "LSE_USAGE" in err and "--post" in err


def test_windowed_posterior_slab(capsys, hapfile, tmp_path):
    code, _, _ = run(capsys, "decode", "--input", hapfile[0], "--variant", "5", "--from", "10",
                     "--to", "19", "--post", "--out", tmp_path / "p.csv")
    assert code == 0
    p, labels = read_matrix_csv(tmp_path / "p.csv")
    assert p.shape == (30, 10) and labels == [str(i) for i in range(10, 20)]
    np.testing.assert_allclose(p.sum(axis=0), 1, atol=1e-12)


def test_module_errors_are_coded(capsys, hapfile, tmp_path):
    bad_pi = tmp_path / "pi.txt"
    np.savetxt(bad_pi, np.ones((30, 30)))
    code, _, err = run(capsys, "decode", "--input", hapfile[0], "--variant", "2", "--pi", bad_pi)
    assert code != 0 and err.startswith("error LSE_PARAMS:")
    code, _, err = run(capsys, "cache-info", "--input", tmp_path / "none.hap.gz")
    assert code != 0 and err.startswith("error LSE_FORMAT:")
    code, _, err = run(capsys, "decode", "--input", hapfile[0], "--variant", "2", "--threads", "0")
    assert code != 0 and err.startswith("error LSE_PROPAGATE:")


def test_convert_roundtrip(capsys, hapfile, tmp_path):
    p, m = hapfile
    assert run(capsys, "convert", "--input", p, "--out", tmp_path / "c.lshc", "--out-format", "native")[0] == 0
    code, out, _ = run(capsys, "query", "--input", tmp_path / "c.lshc")
    got = np.array([[int(x) for x in line.split()] for line in out.strip().splitlines()])
    np.testing.assert_array_equal(got, m)


def test_bench_small(capsys, tmp_path):
    code, _, err = run(capsys, "bench", "--sizes", "40,80", "--lengths", "10,20", "--repeats", "1",
                       "--out", tmp_path / "b.csv")
    assert code == 0
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0].startswith("N,L,threads,lane_width,unroll") and len(lines) == 5
    assert "slope vs N" in err
