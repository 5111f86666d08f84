"""Command-line front end.

All haplotype, variant and recipient indices on the command line are
1-based; they are converted to the library's 0-based indices here.
Errors exit non-zero with a single ``error <CODE>: message`` line on stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings

import numpy as np

from . import bench, decode, hap_cache, io_formats
from .errors import LSEngineError
from .kernels import KernelConfig, backward, forward
from .params import calc_rho, make_parameters, rho_from_map
from .tables import make_backward_table, make_forward_table

log = logging.getLogger("lsengine")

EXIT_ERROR = 2
EXIT_INTERNAL = 70


class UsageError(LSEngineError):
    code = "LSE_USAGE"


def _int_list(text: str) -> list[int]:
    """Parse ``"1,3,5:8"`` into ``[1, 3, 5, 6, 7, 8]``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            a, b = part.split(":", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return out


def _to_zero_based(idx: list[int], n: int, what: str) -> list[int]:
    bad = [i for i in idx if not 1 <= i <= n]
    if bad:
        raise UsageError(f"{what} {bad[0]} out of range 1..{n}")
    return [i - 1 for i in idx]


def _load_input(args) -> hap_cache.HaplotypeCache:
    kind = {"hapgz": "hap_gz", "hdf5": "hdf5", "native": "native", "text": "text_matrix"}.get(
        args.format) if args.format else io_formats.guess_kind(args.input)
    src = io_formats.HapSource(kind=kind, path=args.input, transpose=args.transpose)
    return io_formats.load(src)


def _add_input(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="haplotype file")
    p.add_argument("--format", choices=["hapgz", "hdf5", "native", "text"],
                   help="input format (default: guessed from the file name)")
    p.add_argument("--transpose", action="store_true",
                   help="haplotypes are in the other dimension of the file")


def _kernel_config(args) -> KernelConfig:
    kw = {}
    if args.cores:
        kw["n_threads"] = tuple(_int_list(args.cores))
    elif args.threads is not None:
        kw["n_threads"] = args.threads
    if args.unroll is not None:
        kw["unroll"] = args.unroll
    if args.lane_width is not None:
        kw["lane_width"] = args.lane_width
    return KernelConfig(**kw)


def _add_kernel_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, help="worker threads (default: $LS_ENGINE_THREADS or all cores)")
    p.add_argument("--cores", help="comma-separated core ids; pins one worker to each")
    p.add_argument("--unroll", type=int, choices=[1, 4, 8])
    p.add_argument("--lane-width", type=int, choices=[1, 2, 4, 8])


def _parameters(args, kept: np.ndarray | None):
    cache = hap_cache.current_cache()
    rho = None
    if args.map:
        pos = io_formats.read_text_matrix(args.map).ravel()
        if kept is not None:
            pos = pos[kept] if pos.size == kept.size + len(args._dropped) else pos
        if pos.size != cache.n_variants:
            raise UsageError(f"map has {pos.size} positions, data has {cache.n_variants} variants")
        rho = calc_rho(rho_from_map(pos), s=args.Ne, gamma=args.gamma)
    mu = 1e-8
    if args.mu is not None:
        try:
            mu = float(args.mu)
        except ValueError:
            mu = io_formats.read_text_matrix(args.mu).ravel()
            if kept is not None and mu.size == kept.size + len(args._dropped):
                mu = mu[kept]
    pi = io_formats.read_text_matrix(args.pi) if args.pi else None
    return make_parameters(rho=rho, mu=mu, pi=pi)


def cmd_cache_info(args) -> int:
    _load_input(args)
    print(hap_cache.format_summary(hap_cache.cache_summary()))
    return 0


def cmd_query(args) -> int:
    cache = _load_input(args)
    v = _to_zero_based(_int_list(args.variants), cache.n_variants, "variant") if args.variants else None
    h = _to_zero_based(_int_list(args.haps), cache.n_haps, "haplotype") if args.haps else None
    m = hap_cache.query_cache(v, h)
    for row in m:
        print(" ".join(str(x) for x in row))
    return 0


def cmd_convert(args) -> int:
    cache = _load_input(args)
    fmt = args.out_format
    if fmt == "native":
        io_formats.write_native(args.out, cache)
    else:
        m = hap_cache.query_cache()
        if fmt == "hapgz":
            io_formats.write_hapgz(args.out, m)
        else:
            io_formats.write_hdf5(args.out, m, cache.hap_ids, cache.loci_ids, overwrite=args.force)
    return 0


def cmd_decode(args) -> int:
    cache = _load_input(args)
    n = cache.n_haps
    frm = 0 if args.from_ is None else args.from_ - 1
    to = n - 1 if args.to is None else args.to - 1
    windowed = (frm, to) != (0, n - 1)
    if windowed and not args.post:
        raise UsageError(
            "distances need every recipient; with --from/--to write posterior slabs "
            "(--post) and combine them afterwards"
        )
    if args.dist and args.post:
        raise UsageError("--dist and --post are mutually exclusive")
    if args.post and args.standardize:
        raise UsageError("--standardize applies to distances only")
    if args.post and windowed and args.out_format == "bin":
        raise UsageError("binary output is for square matrices; use --out-format csv for slabs")

    kept = None
    args._dropped = []
    if args.drop_singletons:
        orig_L = cache.n_variants
        args._dropped = hap_cache.drop_singletons()
        kept = np.setdiff1d(np.arange(orig_L), args._dropped)
        cache = hap_cache.current_cache()
        print(f"Dropped {len(args._dropped)} singleton variant(s).")
    if not 1 <= args.variant <= cache.n_variants:
        raise UsageError(f"--variant must lie in 1..{cache.n_variants}")
    ell = args.variant - 1

    print(hap_cache.format_summary(hap_cache.cache_summary()))
    pars = _parameters(args, kept)
    print(pars)
    cfg = _kernel_config(args)
    fwd = make_forward_table(pars, frm, to)
    bck = make_backward_table(pars, frm, to)
    forward(fwd, pars, ell, cfg)
    backward(bck, pars, ell, cfg)
    print(f"Decoding variant {args.variant} (1-based; tables below count from 0).")
    print(fwd)
    print(bck)

    slab = decode.post_probs(fwd, bck)
    if slab.degenerate_columns:
        print(f"Degenerate recipient columns (1-based): "
              f"{' '.join(str(i + 1) for i in slab.degenerate_columns)}")
    labels = [i + 1 for i in range(frm, to + 1)]
    if args.post:
        out = slab.p
    else:
        out = decode.distances_from_posteriors(slab.p, slab.variant, args.standardize).d
    if args.out:
        if args.out_format == "bin":
            decode.write_matrix_bin(args.out, out, ell)
        else:
            decode.write_matrix_csv(args.out, out, labels)
        print(f"Wrote {'posterior slab' if args.post else 'distance matrix'} to {args.out}")
    return 0


def cmd_bench(args) -> int:
    rows = bench.run_bench(
        _int_list(args.sizes), _int_list(args.lengths), _int_list(args.threads),
        repeats=args.repeats, seed=args.seed, unroll=args.unroll, lane_width=args.lane_width,
    )
    if args.out:
        with open(args.out, "w", newline="") as fh:
            bench.write_csv(rows, fh)
    else:
        bench.write_csv(rows, sys.stdout)
    for k, v in bench.scaling_slopes(rows).items():
        print(f"# log-log slope vs {k}: {v:.3f}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lsengine", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("cache-info", help="load haplotypes and print the cache summary")
    _add_input(s)
    s.set_defaults(func=cmd_cache_info)

    s = sub.add_parser("query", help="print part of the haplotype matrix")
    _add_input(s)
    s.add_argument("--variants", help="1-based variant list, e.g. 42,54 or 1:10")
    s.add_argument("--haps", help="1-based haplotype list")
    s.set_defaults(func=cmd_query)

    s = sub.add_parser("convert", help="transcode a haplotype file")
    _add_input(s)
    s.add_argument("--out", required=True)
    s.add_argument("--out-format", choices=["hapgz", "hdf5", "native"], required=True)
    s.add_argument("--force", action="store_true", help="overwrite an existing HDF5 file")
    s.set_defaults(func=cmd_convert)

    s = sub.add_parser("decode", help="propagate to one variant and write distances or posteriors")
    _add_input(s)
    s.add_argument("--map", help="recombination map: one cumulative cM position per variant")
    s.add_argument("--Ne", type=float, default=1.0, help="scalar multiplier s for rho")
    s.add_argument("--gamma", type=float, default=1.0, help="exponent for map distances")
    s.add_argument("--mu", help="mutation probability, or a file of L values")
    s.add_argument("--pi", help="N x N copying-prior matrix file (default uniform)")
    s.add_argument("--variant", type=int, required=True, help="1-based variant to decode")
    s.add_argument("--from", dest="from_", type=int, help="first recipient (1-based)")
    s.add_argument("--to", type=int, help="last recipient (1-based)")
    _add_kernel_flags(s)
    s.add_argument("--dist", action="store_true", help="write distances (default)")
    s.add_argument("--post", action="store_true", help="write posterior probabilities instead")
    s.add_argument("--standardize", action="store_true")
    s.add_argument("--drop-singletons", action="store_true")
    s.add_argument("--out")
    s.add_argument("--out-format", choices=["csv", "bin"], default="csv")
    s.set_defaults(func=cmd_decode)

    s = sub.add_parser("bench", help="time forward propagation, CSV output")
    s.add_argument("--sizes", default="500,1000,2000")
    s.add_argument("--lengths", default="100,200,400")
    s.add_argument("--threads", default="1")
    s.add_argument("--repeats", type=int, default=3)
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--unroll", type=int, choices=[1, 4, 8])
    s.add_argument("--lane-width", type=int, choices=[1, 2, 4, 8])
    s.add_argument("--out")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except LSEngineError as exc:
        print(f"error {exc.code}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"error LSE_IO: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # pragma: no cover
        print(f"error LSE_INTERNAL: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
