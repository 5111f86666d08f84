"""Posterior copying probabilities and local distance matrices."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DecodeError, FormatError
from .tables import BackwardTable, ForwardTable

# Smallest posterior treated as observable; exact binary value keeps -log(EPS) reproducible.
EPS = 2.0 ** -52

_DM_MAGIC = b"LSDM"
_DM_HEADER = struct.Struct("<4sIq")


@dataclass
class PosteriorSlab:
    p: np.ndarray  # N x W
    variant: int
    from_recipient: int
    to_recipient: int
    degenerate_columns: list[int] = field(default_factory=list)

    @property
    def recipients(self) -> np.ndarray:
        return np.arange(self.from_recipient, self.to_recipient + 1)


@dataclass
class DistanceMatrix:
    d: np.ndarray
    variant: int
    standardized: bool = False


def _check_pair(fwd: ForwardTable, bck: BackwardTable) -> None:
    if not isinstance(fwd, ForwardTable) or not isinstance(bck, BackwardTable):
        raise DecodeError("expected a forward table and a backward table")
    if fwd.l is None or bck.l is None:
        raise DecodeError("both tables must be propagated before decoding")
    if fwd.l != bck.l:
        raise DecodeError(f"tables are at different variants (forward {fwd.l}, backward {bck.l})")
    if (fwd.from_recipient, fwd.to_recipient) != (bck.from_recipient, bck.to_recipient):
        raise DecodeError("tables cover different recipient windows")
    if fwd.pars_hash != bck.pars_hash:
        raise DecodeError("tables were propagated with different parameters")


def post_probs(fwd: ForwardTable, bck: BackwardTable) -> PosteriorSlab:
    """Normalise ``alpha * beta`` per recipient column.

    Columns where the product sums to zero (or the tables hold NaN after total
    under/overflow) are reported in ``degenerate_columns`` and filled with
    ``EPS`` for every donor other than the recipient itself.
    """
    _check_pair(fwd, bck)
    prod = fwd.alpha * bck.beta
    # per-column contiguous reduction: identical bits whatever the window width
    total = prod.T.sum(axis=1)
    bad = ~(np.isfinite(total) & (total > 0))
    with np.errstate(invalid="ignore", divide="ignore"):
        p = prod / np.where(bad, 1.0, total)
    recips = np.arange(fwd.from_recipient, fwd.to_recipient + 1)
    cols = np.flatnonzero(bad)
    if cols.size:
        p[:, cols] = EPS
    p[recips, np.arange(recips.size)] = 0.0
    return PosteriorSlab(
        p=p,
        variant=fwd.l,
        from_recipient=fwd.from_recipient,
        to_recipient=fwd.to_recipient,
        degenerate_columns=(recips[cols]).tolist(),
    )


def _neglog(p: np.ndarray) -> np.ndarray:
    return -np.log(np.maximum(p, EPS))


def _standardize(d: np.ndarray) -> np.ndarray:
    n = d.shape[0]
    off = ~np.eye(n, dtype=bool)
    masked = np.where(off, d, np.nan)
    mean = np.nanmean(masked, axis=0)
    sd = np.nanstd(masked, axis=0)
    flat = ~(sd > 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        z = (d - mean) / np.where(flat, 1.0, sd)
    z[:, flat] = 0.0
    z = (z + z.T) * 0.5
    np.fill_diagonal(z, 0.0)
    return z


def distances_from_posteriors(p: np.ndarray, variant: int, standardize: bool = False) -> DistanceMatrix:
    lp = _neglog(p)
    d = (lp + lp.T) * 0.5
    np.fill_diagonal(d, 0.0)
    if standardize:
        d = _standardize(d)
    return DistanceMatrix(d=d, variant=variant, standardized=standardize)


def dist_mat(fwd: ForwardTable, bck: BackwardTable, standardize: bool = False) -> DistanceMatrix:
    """Symmetrised ``-log`` posterior distances for a full recipient window."""
    _check_pair(fwd, bck)
    if not fwd.is_full:
        raise DecodeError(
            "dist_mat needs full-window tables; for recipient windows compute "
            "post_probs per window and use combine_slabs"
        )
    slab = post_probs(fwd, bck)
    return distances_from_posteriors(slab.p, slab.variant, standardize)


def gather_transpose_block(slabs: list[PosteriorSlab], from_recipient: int, to_recipient: int) -> np.ndarray:
    """Rows ``from..to`` of the full posterior matrix, assembled from window slabs.

    The slabs must jointly cover every recipient exactly once.  Entry
    ``[i - from, j]`` is the probability that recipient ``j`` copies donor ``i``.
    """
    if not slabs:
        raise DecodeError("no slabs given")
    variant = slabs[0].variant
    n = slabs[0].p.shape[0]
    out = np.empty((to_recipient - from_recipient + 1, n))
    seen = np.zeros(n, dtype=bool)
    for s in sorted(slabs, key=lambda s: s.from_recipient):
        if s.variant != variant or s.p.shape[0] != n:
            raise DecodeError("slabs disagree on variant or haplotype count")
        if seen[s.from_recipient:s.to_recipient + 1].any():
            raise DecodeError("slabs overlap")
        seen[s.from_recipient:s.to_recipient + 1] = True
        out[:, s.from_recipient:s.to_recipient + 1] = s.p[from_recipient:to_recipient + 1, :]
    if not seen.all():
        raise DecodeError("slabs do not cover every recipient")
    return out


def combine_slabs(local_p: PosteriorSlab, transpose_block: np.ndarray,
                  transpose_variant: int | None = None) -> np.ndarray:
    """Distance columns ``from..to`` (shape ``N x W``) without forming the N x N matrix.

    ``transpose_block`` is ``W x N``: the posterior rows for this window's
    recipients taken across every column (see :func:`gather_transpose_block`).
    """
    n, w = local_p.p.shape
    tb = np.asarray(transpose_block, dtype=np.float64)
    if tb.shape != (w, n):
        raise DecodeError(f"transpose block must have shape {(w, n)}, got {tb.shape}")
    if transpose_variant is not None and transpose_variant != local_p.variant:
        raise DecodeError(
            f"variant mismatch: slab at {local_p.variant}, transpose block at {transpose_variant}"
        )
    d = (_neglog(local_p.p) + _neglog(tb).T) * 0.5
    d[local_p.recipients, np.arange(w)] = 0.0
    return d


# -- matrix output --------------------------------------------------------------

def write_matrix_csv(path, m: np.ndarray, labels=None) -> None:
    labels = list(range(m.shape[1])) if labels is None else list(labels)
    with open(path, "w") as fh:
        fh.write(",".join(str(x) for x in labels) + "\n")
        for row in m:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def read_matrix_csv(path) -> tuple[np.ndarray, list[str]]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data, header


def write_matrix_bin(path, d: np.ndarray, variant: int) -> None:
    n = d.shape[0]
    if d.shape != (n, n):
        raise FormatError("binary distance output needs a square matrix")
    with open(path, "wb") as fh:
        fh.write(_DM_HEADER.pack(_DM_MAGIC, n, int(variant)))
        fh.write(np.ascontiguousarray(d, dtype="<f8").tobytes())


def read_matrix_bin(path) -> DistanceMatrix:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _DM_HEADER.size:
        raise FormatError("truncated distance file")
    magic, n, variant = _DM_HEADER.unpack_from(raw)
    if magic != _DM_MAGIC:
        raise FormatError("not a distance matrix file (bad magic)")
    body = raw[_DM_HEADER.size:]
    if len(body) != 8 * n * n:
        raise FormatError("distance payload has wrong length")
    d = np.frombuffer(body, dtype="<f8").reshape(n, n).astype(np.float64)
    return DistanceMatrix(d=d, variant=variant)
