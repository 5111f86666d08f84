"""Rescaled forward/backward propagation.

Each recipient column is an independent HMM.  Workers take contiguous column
ranges and push every column all the way to the target variant before moving
to the next, so the column stays hot in cache.  Inside a column the donor sum
is accumulated into ``lane_width`` partial sums (donor ``j`` feeds lane
``j % lane_width``), which are then added in ascending lane order.  That order
is fixed, so results never depend on the thread count or the unroll depth;
only the lane width changes the rounding of the sums.

Kernels are compiled with numba per (direction, mu kind, Pi kind, lane
width, unroll) on first use and cached on disk.
"""

from __future__ import annotations

import functools
import logging
import os
import threading
from dataclasses import dataclass, field

import numba
import numpy as np

from . import hap_cache
from .errors import PropagationError
from .params import ModelParameters
from .tables import BackwardTable, ForwardTable

log = logging.getLogger(__name__)

UNROLL_DEPTHS = (1, 4, 8)
LANE_WIDTHS = (1, 2, 4, 8)
DEFAULT_UNROLL = 4
THREADS_ENV = "LS_ENGINE_THREADS"
CHECK_BOUNDS_ENV = "LS_ENGINE_CHECK_BOUNDS"


def detect_lane_width() -> int:
    """Doubles per SIMD register on this CPU, from numpy's runtime feature probe."""
    try:
        from numpy._core._multiarray_umath import __cpu_features__ as feats
    except ImportError:  # numpy < 2
        try:
            from numpy.core._multiarray_umath import __cpu_features__ as feats
        except ImportError:
            return 1
    if feats.get("AVX512F"):
        return 8
    if feats.get("AVX2") or feats.get("AVX"):
        return 4
    if feats.get("ASIMD") or feats.get("NEON") or feats.get("SSE2"):
        return 2
    return 1


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise PropagationError(f"{THREADS_ENV} must be a positive integer, got {env!r}")
        if n < 1:
            raise PropagationError(f"{THREADS_ENV} must be a positive integer, got {env!r}")
        return n
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


@dataclass(frozen=True)
class KernelConfig:
    """``n_threads`` is a count, or a list of core ids to pin one worker to each."""

    n_threads: int | tuple[int, ...] = field(default_factory=default_threads)
    unroll: int = DEFAULT_UNROLL
    lane_width: int = field(default_factory=detect_lane_width)

    def __post_init__(self):
        n = self.n_threads
        if isinstance(n, (list, tuple)):
            cores = tuple(int(c) for c in n)
            if not cores or len(set(cores)) != len(cores):
                raise PropagationError("core list must be non-empty with unique entries")
            ncpu = os.cpu_count() or 1
            if any(c < 0 or c >= ncpu for c in cores):
                raise PropagationError(f"core ids must lie in [0, {ncpu})")
            object.__setattr__(self, "n_threads", cores)
        elif int(n) < 1:
            raise PropagationError("n_threads must be positive")
        if self.unroll not in UNROLL_DEPTHS:
            raise PropagationError(f"unroll must be one of {UNROLL_DEPTHS}")
        if self.lane_width not in LANE_WIDTHS:
            raise PropagationError(f"lane_width must be one of {LANE_WIDTHS}")

    @property
    def cores(self) -> tuple[int, ...] | None:
        return self.n_threads if isinstance(self.n_threads, tuple) else None

    @property
    def thread_count(self) -> int:
        return len(self.n_threads) if self.cores else int(self.n_threads)


def select_kernel(mu_kind: str, pi_kind: str) -> str:
    """Name of the specialised code path for this parameter shape."""
    if mu_kind not in ("scalar", "vector") or pi_kind not in ("uniform", "dense"):
        raise ValueError(f"unknown parameter kinds {mu_kind!r}, {pi_kind!r}")
    return f"{mu_kind}_mu/{pi_kind}_pi"


@functools.lru_cache(maxsize=None)
def _forward_kernel(mu_vector: bool, pi_dense: bool, lanes: int, unroll: int):
    block = lanes * unroll
    lane_mask = lanes - 1

    @numba.njit(cache=True, nogil=True, fastmath=False)
    def kernel(cols, scale, words, stride, n, rho, mu, pi, from_rec, c_lo, c_hi, l_start, target):
        acc = np.empty(lanes)
        nan = np.nan
        for c in range(c_lo, c_hi):
            r = from_rec + c
            col = cols[c]
            if l_start < 0:
                # first variant: alpha = theta * pi
                l = 0
                m = mu[0]
                base = 0
                rbit = (words[(r >> 5)] >> np.uint32(r & 31)) & np.uint32(1)
                for q in range(lanes):
                    acc[q] = 0.0
                for j in range(n):
                    h = ((words[base + (j >> 5)] >> np.uint32(j & 31)) & np.uint32(1)) ^ rbit
                    th = (1.0 - h) * (1.0 - 2.0 * m) + m
                    if pi_dense:
                        v = th * pi[r, j]
                    else:
                        v = th * pi[0, 0]
                    if j == r:
                        v = 0.0
                    col[j] = v
                    acc[j & lane_mask] += v
                f = acc[0]
                for q in range(1, lanes):
                    f += acc[q]
            else:
                l = l_start
                f = scale[c]
            while l < target:
                l += 1
                if not (f > 0.0 and f < np.inf):
                    for j in range(n):
                        col[j] = nan
                    col[r] = 0.0
                    f = nan
                    continue
                if mu_vector:
                    m = mu[l]
                else:
                    m = mu[0]
                one_m2 = 1.0 - 2.0 * m
                rr = rho[l - 1]
                a = (1.0 - rr) / f
                rp = rr * pi[0, 0]
                base = l * stride
                rbit = (words[base + (r >> 5)] >> np.uint32(r & 31)) & np.uint32(1)
                for q in range(lanes):
                    acc[q] = 0.0
                j = 0
                while j + block <= n:
                    for u in range(unroll):
                        for q in range(lanes):
                            jj = j + u * lanes + q
                            h = ((words[base + (jj >> 5)] >> np.uint32(jj & 31)) & np.uint32(1)) ^ rbit
                            th = (1.0 - h) * one_m2 + m
                            if pi_dense:
                                v = th * (col[jj] * a + rr * pi[r, jj])
                            else:
                                v = th * (col[jj] * a + rp)
                            if jj == r:
                                v = 0.0
                            col[jj] = v
                            acc[q] += v
                    j += block
                while j < n:
                    h = ((words[base + (j >> 5)] >> np.uint32(j & 31)) & np.uint32(1)) ^ rbit
                    th = (1.0 - h) * one_m2 + m
                    if pi_dense:
                        v = th * (col[j] * a + rr * pi[r, j])
                    else:
                        v = th * (col[j] * a + rp)
                    if j == r:
                        v = 0.0
                    col[j] = v
                    acc[j & lane_mask] += v
                    j += 1
                f = acc[0]
                for q in range(1, lanes):
                    f += acc[q]
            scale[c] = f

    return kernel


@functools.lru_cache(maxsize=None)
def _backward_kernel(mu_vector: bool, pi_dense: bool, lanes: int, unroll: int):
    block = lanes * unroll
    lane_mask = lanes - 1

    @numba.njit(cache=True, nogil=True, fastmath=False)
    def kernel(cols, scale, words, stride, n, rho, mu, pi, from_rec, c_lo, c_hi, l_start, target):
        acc = np.empty(lanes)
        nan = np.nan
        last = rho.shape[0] - 1
        for c in range(c_lo, c_hi):
            r = from_rec + c
            col = cols[c]
            if l_start < 0:
                for j in range(n):
                    col[j] = 1.0
                l = last
                g = 1.0
            else:
                l = l_start
                g = scale[c]
            while l > target:
                if not (g > 0.0 and g < np.inf):
                    for j in range(n):
                        col[j] = nan
                    col[r] = 0.0
                    g = nan
                    l -= 1
                    continue
                # variant l+1 data weighs the step down to l
                nxt = l
                l -= 1
                if mu_vector:
                    m = mu[nxt]
                else:
                    m = mu[0]
                one_m2 = 1.0 - 2.0 * m
                base = nxt * stride
                rbit = (words[base + (r >> 5)] >> np.uint32(r & 31)) & np.uint32(1)
                for q in range(lanes):
                    acc[q] = 0.0
                j = 0
                while j + block <= n:
                    for u in range(unroll):
                        for q in range(lanes):
                            jj = j + u * lanes + q
                            h = ((words[base + (jj >> 5)] >> np.uint32(jj & 31)) & np.uint32(1)) ^ rbit
                            th = (1.0 - h) * one_m2 + m
                            if pi_dense:
                                v = col[jj] * th * pi[r, jj]
                            else:
                                v = col[jj] * th
                            if jj == r:
                                v = 0.0
                            acc[q] += v
                    j += block
                while j < n:
                    h = ((words[base + (j >> 5)] >> np.uint32(j & 31)) & np.uint32(1)) ^ rbit
                    th = (1.0 - h) * one_m2 + m
                    if pi_dense:
                        v = col[j] * th * pi[r, j]
                    else:
                        v = col[j] * th
                    if j == r:
                        v = 0.0
                    acc[j & lane_mask] += v
                    j += 1
                g = acc[0]
                for q in range(1, lanes):
                    g += acc[q]
                if not pi_dense:
                    g = g * pi[0, 0]
                if not (g > 0.0 and g < np.inf):
                    for j in range(n):
                        col[j] = nan
                    col[r] = 0.0
                    g = nan if g != 0.0 else g
                    continue
                rr = rho[l]
                a = (1.0 - rr) / g
                for j in range(n):
                    h = ((words[base + (j >> 5)] >> np.uint32(j & 31)) & np.uint32(1)) ^ rbit
                    th = (1.0 - h) * one_m2 + m
                    col[j] = col[j] * th * a + rr
                col[r] = 0.0
            scale[c] = g

    return kernel


def _partition(width: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, width))
    edges = np.linspace(0, width, parts + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


_affinity_warned = False


def _pin(core: int) -> None:
    global _affinity_warned
    try:
        os.sched_setaffinity(0, {core})  # pid 0: the calling thread on Linux
    except (AttributeError, OSError) as exc:
        if not _affinity_warned:
            log.warning("thread pinning unavailable (%s); running unpinned", exc)
            _affinity_warned = True


def _dispatch(kernel, table, args_before, args_after, cfg: KernelConfig) -> None:
    cols = table.columns
    chunks = _partition(table.width, cfg.thread_count)
    cores = cfg.cores

    def run(i, lo, hi):
        if cores is not None:
            _pin(cores[i])
        kernel(cols, table.scale, *args_before, lo, hi, *args_after)

    if len(chunks) == 1 and cores is None:
        run(0, *chunks[0])
        return
    errors: list[BaseException] = []

    def guarded(i, lo, hi):
        try:
            run(i, lo, hi)
        except BaseException as exc:  # surfaced after join
            errors.append(exc)

    workers = [threading.Thread(target=guarded, args=(i, lo, hi)) for i, (lo, hi) in enumerate(chunks)]
    for w in workers:
        w.start()
    for w in workers:
        w.join()
    if errors:
        raise errors[0]


def _common_args(pars: ModelParameters, table):
    cache = hap_cache.current_cache()
    if (cache.n_haps, cache.n_variants) != (pars.n_haps, pars.n_variants):
        raise PropagationError("parameters do not match the loaded cache")
    if table.n_haps != cache.n_haps:
        raise PropagationError("table does not match the loaded cache")
    if table.pars_hash != pars.params_hash:
        raise PropagationError(
            "parameter hash mismatch: this table was built for a different parameter set"
        )
    return cache, (
        cache.data, cache.stride_words, cache.n_haps, pars.rho,
        pars.kernel_mu(), pars.kernel_pi(), table.from_recipient,
    )


def _bounds_checks_enabled() -> bool:
    return os.environ.get(CHECK_BOUNDS_ENV, "") not in ("", "0")


def forward(fwd: ForwardTable, pars: ModelParameters, t: int | None = None,
            cfg: KernelConfig | None = None) -> None:
    """Advance ``fwd`` in place to variant ``t`` (default: one step)."""
    cfg = cfg or KernelConfig()
    cache, args = _common_args(pars, fwd)
    L = cache.n_variants
    if t is None:
        t = 0 if fwd.l is None else fwd.l + 1
    t = int(t)
    if not 0 <= t < L:
        raise PropagationError(f"target variant {t} out of range [0, {L})")
    if fwd.l is not None and t <= fwd.l:
        raise PropagationError(
            f"cannot propagate forward table backwards (at {fwd.l}, target {t}); reset it first"
        )
    kern = _forward_kernel(pars.mu_kind == "vector", pars.pi_kind == "dense",
                           cfg.lane_width, cfg.unroll)
    l_start = -1 if fwd.l is None else fwd.l
    _dispatch(kern, fwd, args, (l_start, t), cfg)
    fwd.l = t
    if _bounds_checks_enabled():
        check_bounds(fwd, pars)


def backward(bck: BackwardTable, pars: ModelParameters, t: int | None = None,
             cfg: KernelConfig | None = None) -> None:
    """Move ``bck`` in place back to variant ``t`` (default: one step)."""
    cfg = cfg or KernelConfig()
    cache, args = _common_args(pars, bck)
    L = cache.n_variants
    if t is None:
        t = L - 1 if bck.l is None else bck.l - 1
    t = int(t)
    if not 0 <= t < L:
        raise PropagationError(f"target variant {t} out of range [0, {L})")
    if bck.l is not None and t >= bck.l:
        raise PropagationError(
            f"cannot propagate backward table forwards (at {bck.l}, target {t}); reset it first"
        )
    kern = _backward_kernel(pars.mu_kind == "vector", pars.pi_kind == "dense",
                            cfg.lane_width, cfg.unroll)
    l_start = -1 if bck.l is None else bck.l
    _dispatch(kern, bck, args, (l_start, t), cfg)
    bck.l = t
    if _bounds_checks_enabled():
        check_bounds(bck, pars)


def check_bounds(table, pars: ModelParameters) -> None:
    """Assert the analytic bounds: alpha <= 2; beta <= 1 + 1/min(pi) for uniform pi."""
    vals = table.slab[:, ~table.degenerate]
    if isinstance(table, ForwardTable):
        if vals.size and (np.any(vals < 0) or np.any(vals > 2)):
            raise AssertionError(f"alpha outside [0, 2] at variant {table.l}")
    elif pars.pi_kind == "uniform":
        bound = 1.0 + 1.0 / pars.pi.value
        if vals.size and (np.any(vals < 0) or np.any(vals > bound)):
            raise AssertionError(f"beta outside [0, {bound}] at variant {table.l}")
