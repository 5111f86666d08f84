"""Reading and writing haplotype files.

Supported inputs:

* ``.hap.gz`` (IMPUTE2/SHAPEIT HAP): one variant per line, one
  space-separated 0/1 token per haplotype.  LEGEND/SAMPLE sidecars are not read.
* HDF5: a 2-D ``/haps`` dataset with haplotypes along the slowest-changing
  dimension, plus optional 1-D ``/hap.ids`` and ``/loci.ids``.  Needs h5py.
* native: a bit-exact dump of the packed cache.
"""

from __future__ import annotations

import gzip
import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import hap_cache
from .errors import CacheError, FormatError

log = logging.getLogger(__name__)

try:
    import h5py
except ImportError:  # HDF5 support is optional
    h5py = None

HAS_HDF5 = h5py is not None

NATIVE_MAGIC = b"LSHC"
NATIVE_VERSION = 1
_NATIVE_HEADER = struct.Struct("<4sHIII")

_ROW_CHUNK = 4096


@dataclass
class HapSource:
    kind: str  # hap_gz | hdf5 | native | text_matrix
    path: Path
    transpose: bool = False

    def __post_init__(self):
        self.path = Path(self.path)
        if self.kind not in ("hap_gz", "hdf5", "native", "text_matrix"):
            raise FormatError(f"unknown input kind {self.kind!r}")
        if not self.path.is_file() or not os.access(self.path, os.R_OK):
            raise FormatError(f"cannot read {self.path}")


def guess_kind(path) -> str:
    name = str(path).lower()
    if name.endswith((".h5", ".hdf5")):
        return "hdf5"
    if name.endswith((".lshc", ".bin")):
        return "native"
    if name.endswith(".gz"):
        return "hap_gz"
    return "text_matrix"


def _parse_line(line: str, lineno: int, n: int | None) -> np.ndarray:
    toks = line.split()
    if n is not None and len(toks) != n:
        raise FormatError(f"line {lineno}: expected {n} alleles, found {len(toks)}")
    try:
        row = np.array(toks, dtype=np.int64)
    except ValueError:
        bad = next(i for i, t in enumerate(toks) if not t.lstrip("-").isdigit())
        raise FormatError(f"line {lineno}, column {bad + 1}: non-binary allele {toks[bad]!r}")
    nonbin = np.flatnonzero((row != 0) & (row != 1))
    if nonbin.size:
        c = nonbin[0]
        raise FormatError(f"line {lineno}, column {c + 1}: non-binary allele {toks[c]!r}")
    return row.astype(np.uint8)


def _read_rows(fh) -> tuple[np.ndarray, int]:
    """Stream text rows, packing each chunk as it arrives."""
    n = None
    stride = 0
    chunks: list[np.ndarray] = []
    pending: list[np.ndarray] = []
    for lineno, line in enumerate(fh, start=1):
        if not line.strip():
            continue
        row = _parse_line(line, lineno, n)
        if n is None:
            n = row.size
            if n < 2:
                raise FormatError("need at least 2 haplotypes per line")
            stride = hap_cache.row_layout(n)[1]
        pending.append(row)
        if len(pending) == _ROW_CHUNK:
            chunks.append(hap_cache.pack_rows(np.stack(pending), stride))
            pending.clear()
    if pending:
        chunks.append(hap_cache.pack_rows(np.stack(pending), stride))
    if n is None:
        raise FormatError("empty haplotype file")
    return np.concatenate(chunks), n


def read_hapgz(path, transpose: bool = False) -> hap_cache.HaplotypeCache:
    """Load a ``.hap.gz`` (or plain text) file into the cache.

    ``transpose=True`` reads one haplotype per line instead.
    """
    hap_cache.clear_cache()
    opener = gzip.open if _is_gzip(path) else open
    try:
        with opener(path, "rt") as fh:
            if transpose:
                rows = [_parse_line(line, i, None) for i, line in enumerate(fh, 1) if line.strip()]
                if not rows:
                    raise FormatError("empty haplotype file")
                lengths = {r.size for r in rows}
                if len(lengths) != 1:
                    raise FormatError("ragged haplotype lines")
                return hap_cache.cache_from_matrix(np.stack(rows).T)
            rows, n = _read_rows(fh)
    except (OSError, EOFError) as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    cache = hap_cache.build_cache(rows, n)
    log.info("loaded %d haplotypes x %d variants from %s", cache.n_haps, cache.n_variants, path)
    return cache


def _is_gzip(path) -> bool:
    with open(path, "rb") as fh:
        return fh.read(2) == b"\x1f\x8b"


def write_hapgz(path, matrix) -> None:
    m = np.asarray(matrix)
    with gzip.open(path, "wt") as fh:
        for row in m:
            fh.write(" ".join("1" if x else "0" for x in row))
            fh.write("\n")


def _require_h5py():
    if h5py is None:
        raise FormatError("HDF5 support needs the optional h5py dependency")


def _decode_ids(ds) -> list[str]:
    return [x.decode() if isinstance(x, bytes) else str(x) for x in ds[()]]


def read_haplotypes(path, transpose: bool = False, hap_ids=None, loci_ids=None):
    """Read an HDF5 haplotype file into an ``L x N`` matrix (no caching).

    ``hap_ids`` / ``loci_ids`` select haplotypes / variants by stored id.
    Returns ``(matrix, hap_ids, loci_ids)``.
    """
    _require_h5py()
    with h5py.File(path, "r") as f:
        if "haps" not in f:
            raise FormatError(f"{path}: no /haps dataset")
        ds = f["haps"]
        if ds.ndim != 2:
            raise FormatError(f"{path}: /haps must be 2-D, found rank {ds.ndim}")
        raw = ds[()]
        all_hap = _decode_ids(f["hap.ids"]) if "hap.ids" in f else None
        all_loci = _decode_ids(f["loci.ids"]) if "loci.ids" in f else None
    # haplotypes along the slowest-changing (first) dimension
    m = raw if transpose else raw.T
    if not np.issubdtype(m.dtype, np.number) and m.dtype != bool:
        raise FormatError(f"{path}: /haps is not numeric")
    bad = np.argwhere((m != 0) & (m != 1))
    if bad.size:
        r, c = bad[0]
        raise FormatError(f"{path}: non-binary allele at variant {r}, haplotype {c}")
    m = m.astype(np.uint8)
    if all_hap is not None and len(all_hap) != m.shape[1]:
        raise FormatError(f"{path}: /hap.ids length does not match haplotype count")
    if all_loci is not None and len(all_loci) != m.shape[0]:
        raise FormatError(f"{path}: /loci.ids length does not match variant count")

    def pick(sel, names, what):
        if sel is None:
            return None
        sel = [sel] if isinstance(sel, str) else list(sel)
        if names is None:
            raise FormatError(f"{path}: file has no {what} ids")
        missing = [s for s in sel if s not in names]
        if missing:
            raise FormatError(f"{path}: unknown {what} id {missing[0]!r}")
        return [names.index(s) for s in sel]

    vi = pick(loci_ids, all_loci, "loci")
    hi = pick(hap_ids, all_hap, "haplotype")
    if vi is not None:
        m = m[vi]
        all_loci = [all_loci[i] for i in vi]
    if hi is not None:
        m = m[:, hi]
        all_hap = [all_hap[i] for i in hi]
    return m, all_hap, all_loci


def read_hdf5(path, transpose: bool = False) -> hap_cache.HaplotypeCache:
    hap_cache.clear_cache()
    m, hap_ids, loci_ids = read_haplotypes(path, transpose=transpose)
    cache = hap_cache.cache_from_matrix(m, hap_ids=hap_ids, loci_ids=loci_ids)
    log.info(
        "HDF5 %s: detected %d haplotypes, %d variants (check these are not swapped; "
        "use transpose otherwise)", path, cache.n_haps, cache.n_variants,
    )
    return cache


def write_hdf5(path, matrix, hap_ids=None, loci_ids=None, overwrite: bool = False) -> None:
    """Write an ``L x N`` matrix so :func:`read_hdf5` restores it exactly."""
    _require_h5py()
    if Path(path).exists() and not overwrite:
        raise FormatError(f"{path} exists; pass overwrite=True to replace it")
    m = np.asarray(matrix)
    if m.ndim != 2:
        raise FormatError("matrix must be 2-D")
    if np.any((m != 0) & (m != 1)):
        raise FormatError("matrix must be binary")
    with h5py.File(path, "w") as f:
        f.create_dataset("haps", data=m.T.astype(np.uint8), compression="gzip")
        str_dt = h5py.string_dtype()
        if hap_ids is not None:
            if len(hap_ids) != m.shape[1]:
                raise FormatError("hap_ids length must equal the number of haplotypes")
            f.create_dataset("hap.ids", data=list(map(str, hap_ids)), dtype=str_dt)
        if loci_ids is not None:
            if len(loci_ids) != m.shape[0]:
                raise FormatError("loci_ids length must equal the number of variants")
            f.create_dataset("loci.ids", data=list(map(str, loci_ids)), dtype=str_dt)


def write_native(path, cache: hap_cache.HaplotypeCache | None = None) -> None:
    cache = cache or hap_cache.current_cache()
    with open(path, "wb") as fh:
        fh.write(_NATIVE_HEADER.pack(
            NATIVE_MAGIC, NATIVE_VERSION, cache.n_haps, cache.n_variants, cache.stride_words
        ))
        fh.write(cache.data.astype("<u4", copy=False).tobytes())


def read_native(path) -> hap_cache.HaplotypeCache:
    hap_cache.clear_cache()
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _NATIVE_HEADER.size:
        raise FormatError("truncated native cache file")
    magic, version, n, L, stride = _NATIVE_HEADER.unpack_from(raw)
    if magic != NATIVE_MAGIC:
        raise FormatError("not a native cache file (bad magic)")
    if version != NATIVE_VERSION:
        raise FormatError(f"unsupported native cache version {version}")
    if n < 2 or L < 1 or stride != hap_cache.row_layout(n)[1]:
        raise FormatError("corrupt native cache header")
    body = raw[_NATIVE_HEADER.size:]
    if len(body) != 4 * L * stride:
        raise FormatError(f"native payload truncated: expected {4 * L * stride} bytes, got {len(body)}")
    rows = np.frombuffer(body, dtype="<u4").astype(np.uint32).reshape(L, stride)
    try:
        return hap_cache.build_cache(rows, n)
    except CacheError as exc:
        raise FormatError(str(exc)) from exc


def read_text_matrix(path) -> np.ndarray:
    """Whitespace-separated numeric matrix (used for Pi, mu and map files)."""
    try:
        return np.loadtxt(path, ndmin=2)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def load(source: HapSource) -> hap_cache.HaplotypeCache:
    if source.kind in ("hap_gz", "text_matrix"):
        return read_hapgz(source.path, transpose=source.transpose)
    if source.kind == "hdf5":
        return read_hdf5(source.path, transpose=source.transpose)
    return read_native(source.path)
