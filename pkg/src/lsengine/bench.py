"""Timing harness: seconds per variant of forward propagation on synthetic data."""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import hap_cache
from .kernels import KernelConfig, forward
from .params import calc_rho, make_parameters
from .tables import make_forward_table, reset_table

FIELDS = ["N", "L", "threads", "lane_width", "unroll", "seconds", "seconds_per_variant", "status"]


@dataclass
class BenchRow:
    N: int
    L: int
    threads: int
    lane_width: int
    unroll: int
    seconds: float
    seconds_per_variant: float
    status: str = "ok"


def synthetic_haplotypes(n_haps: int, n_variants: int, seed: int = 1) -> np.ndarray:
    rng = np.random.default_rng(seed)
    freqs = rng.uniform(0.05, 0.5, size=(n_variants, 1))
    return (rng.random((n_variants, n_haps)) < freqs).astype(np.uint8)


def _prepare(n_haps: int, n_variants: int, seed: int):
    hap_cache.cache_from_matrix(synthetic_haplotypes(n_haps, n_variants, seed))
    rng = np.random.default_rng(seed + 1)
    pars = make_parameters(rho=calc_rho(rng.uniform(0, 0.1, n_variants - 1)), mu=1e-3)
    return pars, make_forward_table(pars)


def _time_once(pars, fwd, cfg: KernelConfig) -> float:
    reset_table(fwd)
    t0 = time.perf_counter()
    forward(fwd, pars, pars.n_variants - 1, cfg)
    return time.perf_counter() - t0


def time_forward(n_haps: int, n_variants: int, cfg: KernelConfig, repeats: int = 3,
                 seed: int = 1) -> float:
    """Best-of-``repeats`` wall time to take a fresh table from variant 0 to the last."""
    pars, fwd = _prepare(n_haps, n_variants, seed)
    forward(fwd, pars, min(1, n_variants - 1), cfg)  # warm-up / JIT
    return min(_time_once(pars, fwd, cfg) for _ in range(repeats))


def run_bench(sizes, lengths, threads=(1,), repeats: int = 3, seed: int = 1,
              unroll: int | None = None, lane_width: int | None = None) -> list[BenchRow]:
    """Time every (N, L, threads) cell, keeping the best of ``repeats``.

    Repeats are interleaved: each round visits every cell once, so slow
    phases on a shared machine are spread over the grid rather than landing
    on a few cells and skewing the fitted slopes.
    """
    cells = []
    for n in sizes:
        for L in lengths:
            for nt in threads:
                kw = {"n_threads": int(nt)}
                if unroll is not None:
                    kw["unroll"] = unroll
                if lane_width is not None:
                    kw["lane_width"] = lane_width
                cells.append((int(n), int(L), int(nt), KernelConfig(**kw)))
    best = {c[:3]: np.inf for c in cells}
    failed: dict[tuple, str] = {}
    for rnd in range(max(1, repeats)):
        for n, L, nt, cfg in cells:
            key = (n, L, nt)
            if key in failed:
                continue
            try:
                pars, fwd = _prepare(n, L, seed)
                if rnd == 0:
                    forward(fwd, pars, min(1, L - 1), cfg)  # warm-up / JIT
                best[key] = min(best[key], _time_once(pars, fwd, cfg))
            except MemoryError as exc:
                failed[key] = f"error: {exc}"
    hap_cache.clear_cache()
    rows = []
    for n, L, nt, cfg in cells:
        key = (n, L, nt)
        if key in failed:
            rows.append(BenchRow(n, L, nt, cfg.lane_width, cfg.unroll,
                                 float("nan"), float("nan"), failed[key]))
        else:
            rows.append(BenchRow(n, L, nt, cfg.lane_width, cfg.unroll, best[key], best[key] / L))
    return rows


def loglog_slope(x, y) -> float:
    x, y = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(x, y, 1)[0])


def scaling_slopes(rows: list[BenchRow]) -> dict[str, float]:
    """Fitted exponents of total time against N (at the largest L) and L (at the largest N)."""
    ok = [r for r in rows if r.status == "ok"]
    out = {}
    Ls = sorted({r.L for r in ok})
    Ns = sorted({r.N for r in ok})
    if len(Ns) > 1:
        sel = sorted((r for r in ok if r.L == Ls[-1] and r.threads == ok[0].threads), key=lambda r: r.N)
        out["N"] = loglog_slope([r.N for r in sel], [r.seconds for r in sel])
    if len(Ls) > 1:
        sel = sorted((r for r in ok if r.N == Ns[-1] and r.threads == ok[0].threads), key=lambda r: r.L)
        out["L"] = loglog_slope([r.L for r in sel], [r.seconds for r in sel])
    return out


def write_csv(rows: list[BenchRow], fh) -> None:
    w = csv.DictWriter(fh, fieldnames=FIELDS)
    w.writeheader()
    for r in rows:
        w.writerow(asdict(r))
