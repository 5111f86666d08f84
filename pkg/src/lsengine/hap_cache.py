"""In-process haplotype store.

Haplotypes are bit-packed variant-major: each variant occupies one row of
32-bit words, bit ``b`` of word ``w`` holding haplotype ``32*w + b``.  Rows are
padded so every row starts on a 32-byte boundary.  Only one data set is held
at a time; loading a new one discards the old.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._util import ALIGN_BYTES, aligned_zeros
from .errors import CacheError

log = logging.getLogger(__name__)

WORD_BITS = 32
WORDS_PER_ROW_ALIGN = ALIGN_BYTES // 4


@dataclass
class HaplotypeCache:
    n_haps: int
    n_variants: int
    words_per_variant: int
    stride_words: int
    data: np.ndarray
    singleton_variants: list[int] = field(default_factory=list)
    hap_ids: list[str] | None = None
    loci_ids: list[str] | None = None

    @property
    def rows(self) -> np.ndarray:
        """``data`` viewed as ``(n_variants, stride_words)``."""
        return self.data.reshape(self.n_variants, self.stride_words)

    @property
    def payload_bytes(self) -> int:
        return self.n_variants * self.words_per_variant * 4

    @property
    def nbytes(self) -> int:
        # padded rows; this is what lives in memory
        return self.data.nbytes

    @property
    def padding_bytes(self) -> int:
        return self.nbytes - self.payload_bytes


@dataclass
class VariantLaneBuffer:
    values: np.ndarray
    variant: int


def row_layout(n_haps: int) -> tuple[int, int]:
    """(words_per_variant, stride_words) for ``n_haps`` haplotypes."""
    words = -(-n_haps // WORD_BITS)
    stride = -(-words // WORDS_PER_ROW_ALIGN) * WORDS_PER_ROW_ALIGN
    return words, stride


def pack_rows(bits: np.ndarray, stride_words: int) -> np.ndarray:
    """Pack a ``(k, N)`` 0/1 uint8 array into ``(k, stride_words)`` uint32 words."""
    k, n = bits.shape
    padded = np.zeros((k, stride_words * WORD_BITS), dtype=np.uint8)
    padded[:, :n] = bits
    packed = np.packbits(padded, axis=1, bitorder="little")
    return packed.view("<u4").astype(np.uint32, copy=False)


def unpack_rows(words: np.ndarray, n_haps: int) -> np.ndarray:
    """Inverse of :func:`pack_rows`, trimmed to ``n_haps`` columns."""
    as_bytes = np.ascontiguousarray(words).astype("<u4", copy=False).view(np.uint8)
    bits = np.unpackbits(as_bytes, axis=-1, bitorder="little")
    return bits[..., :n_haps]


def _check_binary(matrix: np.ndarray, row_offset: int = 0) -> np.ndarray:
    bad = (matrix != 0) & (matrix != 1)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise CacheError(
            f"non-binary allele {matrix[r, c]!r} at variant {r + row_offset}, haplotype {c}"
        )
    return matrix.astype(np.uint8)


def _singletons(rows: np.ndarray, n_haps: int) -> list[int]:
    counts = np.bitwise_count(rows).sum(axis=1, dtype=np.int64)
    return np.flatnonzero((counts == 1) | (counts == n_haps - 1)).tolist()


_lock = threading.Lock()
_current: HaplotypeCache | None = None


def build_cache(rows: np.ndarray, n_haps: int, hap_ids=None, loci_ids=None) -> HaplotypeCache:
    """Make ``rows`` (already packed, shape ``(L, stride)``) the current cache."""
    n_variants, stride = rows.shape
    words, expected_stride = row_layout(n_haps)
    if stride != expected_stride:
        raise CacheError(f"row stride {stride} does not match layout for N={n_haps}")
    tail = n_haps % WORD_BITS
    if np.any(rows[:, words:]) or (tail and np.any(rows[:, words - 1] >> np.uint32(tail))):
        raise CacheError("padding bits beyond the last haplotype must be zero")
    data = aligned_zeros(n_variants * stride, np.uint32)
    data.reshape(n_variants, stride)[:] = rows
    data.flags.writeable = False
    cache = HaplotypeCache(
        n_haps=n_haps,
        n_variants=n_variants,
        words_per_variant=words,
        stride_words=stride,
        data=data,
        hap_ids=list(hap_ids) if hap_ids is not None else None,
        loci_ids=list(loci_ids) if loci_ids is not None else None,
    )
    cache.singleton_variants = _singletons(cache.rows, n_haps)
    if cache.singleton_variants:
        log.warning(
            "%d singleton variant(s) loaded; consider removing them to reduce the "
            "risk of total underflow", len(cache.singleton_variants)
        )
    _set_current(cache)
    return cache


def _set_current(cache: HaplotypeCache | None) -> None:
    global _current
    with _lock:
        _current = cache


def cache_from_matrix(matrix, hap_ids=None, loci_ids=None) -> HaplotypeCache:
    """Load an ``L x N`` 0/1 matrix (variants in rows) into the cache."""
    clear_cache()
    m = np.asarray(matrix)
    if m.ndim != 2 or m.size == 0:
        raise CacheError(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    n_variants, n_haps = m.shape
    if n_haps < 2:
        raise CacheError("need at least 2 haplotypes")
    bits = _check_binary(m)
    _, stride = row_layout(n_haps)
    return build_cache(pack_rows(bits, stride), n_haps, hap_ids, loci_ids)


def clear_cache() -> None:
    _set_current(None)


def current_cache() -> HaplotypeCache:
    cache = _current
    if cache is None:
        raise CacheError("no cache loaded")
    return cache


def has_cache() -> bool:
    return _current is not None


def _resolve(idx, n: int, names: list[str] | None, what: str) -> np.ndarray:
    if idx is None:
        return np.arange(n)
    if isinstance(idx, (str, int, np.integer)):
        idx = [idx]
    out = []
    for v in idx:
        if isinstance(v, str):
            if names is None or v not in names:
                raise CacheError(f"unknown {what} id {v!r}")
            out.append(names.index(v))
        else:
            v = int(v)
            if not 0 <= v < n:
                raise CacheError(f"{what} index {v} out of range [0, {n})")
            out.append(v)
    return np.asarray(out, dtype=np.int64)


def query_cache(variants: Sequence | None = None, haplotypes: Sequence | None = None) -> np.ndarray:
    """Read back part (or all) of the cache as an integer matrix.

    ``variants``/``haplotypes`` are 0-based index lists (or ids, when the
    cache was loaded with them); ``None`` means all.
    """
    cache = current_cache()
    v = _resolve(variants, cache.n_variants, cache.loci_ids, "variant")
    h = _resolve(haplotypes, cache.n_haps, cache.hap_ids, "haplotype")
    bits = unpack_rows(cache.rows[v], cache.n_haps)
    return bits[:, h].astype(np.int32)


def cache_summary() -> dict | None:
    """Counts and memory for the current cache, or ``None`` when empty."""
    cache = _current
    if cache is None:
        return None
    return {
        "n_haps": cache.n_haps,
        "n_variants": cache.n_variants,
        "bytes": cache.nbytes,
        "payload_bytes": cache.payload_bytes,
        "padding_bytes": cache.padding_bytes,
        "singleton_count": len(cache.singleton_variants),
    }


def format_summary(summary: dict | None) -> str:
    if summary is None:
        return "no cache loaded"
    return (
        f"Cache currently loaded with {summary['n_haps']} haplotypes, each with "
        f"{summary['n_variants']} variants.\n"
        f"  Memory consumed: {summary['bytes'] / 1000:.2f} kB "
        f"(payload {summary['payload_bytes']} B, padding {summary['padding_bytes']} B).\n"
        f"  Singleton variants: {summary['singleton_count']}"
    )


def unpack_variant(cache: HaplotypeCache, variant: int) -> VariantLaneBuffer:
    if not 0 <= variant < cache.n_variants:
        raise CacheError(f"variant {variant} out of range [0, {cache.n_variants})")
    bits = unpack_rows(cache.rows[variant], cache.n_haps)
    return VariantLaneBuffer(values=bits.astype(np.float64), variant=variant)


def drop_variants(indices) -> HaplotypeCache:
    """Rebuild the current cache without the given variants (ids kept in step)."""
    cache = current_cache()
    drop = np.zeros(cache.n_variants, dtype=bool)
    drop[np.asarray(list(indices), dtype=np.int64)] = True
    if drop.all():
        raise CacheError("dropping these variants would leave the cache empty")
    keep = np.flatnonzero(~drop)
    loci = [cache.loci_ids[i] for i in keep] if cache.loci_ids is not None else None
    return build_cache(cache.rows[keep].copy(), cache.n_haps, cache.hap_ids, loci)


def drop_singletons() -> list[int]:
    """Remove singleton variants from the current cache; returns the removed indices."""
    removed = list(current_cache().singleton_variants)
    if removed:
        drop_variants(removed)
    return removed
