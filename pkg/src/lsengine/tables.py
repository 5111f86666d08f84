"""Forward and backward probability tables.

A table holds one column per recipient in its window (``from_recipient`` to
``to_recipient`` inclusive) and one row per donor.  The slab is stored
column-contiguous so each recipient's HMM is a contiguous run of doubles.
Tables are mutated in place by propagation; use :func:`copy_table` to
duplicate one.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import hap_cache
from ._util import aligned_zeros
from .errors import FormatError, TableError
from .params import ModelParameters

UNINITIALIZED = None

_MAGIC = b"LSTB"
_VERSION = 1
_KIND_CODE = {"forward": 0, "backward": 1}
_HEADER = struct.Struct("<4sHBqII32s")


@dataclass(eq=False)
class _Table:
    slab: np.ndarray  # N x W, Fortran order
    scale: np.ndarray  # length W
    l: int | None
    from_recipient: int
    to_recipient: int
    pars_hash: bytes

    kind = "table"

    @property
    def n_haps(self) -> int:
        return self.slab.shape[0]

    @property
    def width(self) -> int:
        return self.to_recipient - self.from_recipient + 1

    @property
    def is_full(self) -> bool:
        return self.from_recipient == 0 and self.to_recipient == self.n_haps - 1

    @property
    def initialized(self) -> bool:
        return self.l is not None

    @property
    def nbytes(self) -> int:
        return self.slab.nbytes + self.scale.nbytes

    @property
    def degenerate(self) -> np.ndarray:
        """Columns whose last normaliser was zero or non-finite (total under/overflow)."""
        if self.l is None:
            return np.zeros(self.width, dtype=bool)
        return ~(np.isfinite(self.scale) & (self.scale > 0))

    @property
    def columns(self) -> np.ndarray:
        """``W x N`` C-contiguous view, one row per recipient."""
        return self.slab.T

    def __str__(self) -> str:
        span = "Full" if self.is_full else (
            f"Partial (recipients {self.from_recipient}..{self.to_recipient})"
        )
        head = f"{span} {self.kind.capitalize()} Table object for {self.n_haps} haplotypes."
        if self.kind == "backward":
            head = head[:-1] + ", in rescaled probability space."
        state = (
            "  Newly created table, currently uninitialised to any variant."
            if self.l is None else f"  Current variant = {self.l}"
        )
        return f"{head}\n{state}\n  Memory consumed: {self.nbytes / 1000:.2f} kB"


@dataclass(eq=False)
class ForwardTable(_Table):
    kind = "forward"

    @property
    def alpha(self) -> np.ndarray:
        return self.slab

    @property
    def alpha_f(self) -> np.ndarray:
        return self.scale


@dataclass(eq=False)
class BackwardTable(_Table):
    beta_theta: bool = False
    kind = "backward"

    @property
    def beta(self) -> np.ndarray:
        return self.slab

    @property
    def beta_g(self) -> np.ndarray:
        return self.scale


def _window(n: int, from_recipient: int, to_recipient: int | None) -> tuple[int, int]:
    to = n - 1 if to_recipient is None else int(to_recipient)
    frm = int(from_recipient)
    if not 0 <= frm <= to < n:
        raise TableError(f"invalid recipient window {frm}..{to} for N={n}")
    return frm, to


def _alloc(cls, pars: ModelParameters, from_recipient: int, to_recipient: int | None):
    cache = hap_cache.current_cache()
    if (cache.n_haps, cache.n_variants) != (pars.n_haps, pars.n_variants):
        raise TableError("parameters do not match the loaded cache dimensions")
    n = cache.n_haps
    frm, to = _window(n, from_recipient, to_recipient)
    w = to - frm + 1
    return cls(
        slab=aligned_zeros((n, w), np.float64, order="F"),
        scale=aligned_zeros(w, np.float64),
        l=UNINITIALIZED,
        from_recipient=frm,
        to_recipient=to,
        pars_hash=pars.params_hash,
    )


def make_forward_table(pars: ModelParameters, from_recipient: int = 0,
                       to_recipient: int | None = None) -> ForwardTable:
    return _alloc(ForwardTable, pars, from_recipient, to_recipient)


def make_backward_table(pars: ModelParameters, from_recipient: int = 0,
                        to_recipient: int | None = None) -> BackwardTable:
    return _alloc(BackwardTable, pars, from_recipient, to_recipient)


def copy_table(dst: _Table, src: _Table) -> None:
    """Deep-copy ``src`` into the existing table ``dst``."""
    if dst is src:
        return
    if type(dst) is not type(src):
        raise TableError(f"cannot copy a {src.kind} table into a {dst.kind} table")
    if dst.slab.shape != src.slab.shape or (dst.from_recipient, dst.to_recipient) != (
        src.from_recipient, src.to_recipient
    ):
        raise TableError("tables differ in size or recipient window")
    dst.slab[...] = src.slab
    dst.scale[...] = src.scale
    dst.l = src.l
    dst.pars_hash = src.pars_hash


def reset_table(t: _Table) -> None:
    t.l = UNINITIALIZED
    t.scale[...] = 0


def save_table(path, t: _Table) -> None:
    header = _HEADER.pack(
        _MAGIC, _VERSION, _KIND_CODE[t.kind], -1 if t.l is None else t.l,
        t.from_recipient, t.to_recipient, t.pars_hash,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(t.scale, dtype="<f8").tobytes())
        # column-major: recipient columns one after another
        fh.write(np.asarray(t.slab, dtype="<f8").tobytes(order="F"))


def load_table(path) -> _Table:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FormatError("truncated table file")
    magic, version, kind, l, frm, to, digest = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise FormatError("not a table checkpoint (bad magic)")
    if version != _VERSION:
        raise FormatError(f"unsupported table file version {version}")
    cls = {0: ForwardTable, 1: BackwardTable}.get(kind)
    if cls is None:
        raise FormatError(f"unknown table kind {kind}")
    if to < frm:
        raise FormatError("corrupt recipient window")
    w = to - frm + 1
    if (len(raw) - _HEADER.size) % 8:
        raise FormatError("table payload has inconsistent length")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    n, rem = divmod(body.size - w, w)
    if rem or n < 2 or to >= n:
        raise FormatError("table payload has inconsistent length")
    t = cls(
        slab=aligned_zeros((n, w), np.float64, order="F"),
        scale=aligned_zeros(w, np.float64),
        l=None if l < 0 else int(l),
        from_recipient=frm,
        to_recipient=to,
        pars_hash=digest,
    )
    t.scale[:] = body[:w]
    t.slab[:] = body[w:].reshape((n, w), order="F")
    return t
