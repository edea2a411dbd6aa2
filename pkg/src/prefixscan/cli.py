"""Command-line front end: single scans, verification matrix, benchmarks.

Exit codes: 0 success, 1 verification or computation failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import bench
from .core import wrap_element
from .plan import L2_ELEMS_ENV, default_block_len, detect_cache_info


def _add_case_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--algo", default="Scalar", help="algorithm label, e.g. Scalar, SIMD, SIMD1-P")
    p.add_argument("--n", type=int, default=None,
                   help="element count (default: 2^24 per thread, capped at 8 threads; "
                        "verify defaults to 2^20)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--block-len", default="0",
                   help="elements per thread per iteration; 'auto' = half L2 per thread")
    p.add_argument("--d0", type=float, default=1.0, help="dilation for thread 0's partition")
    p.add_argument("--d-last", type=float, default=1.0, help="dilation for the extra last partition")
    p.add_argument("--elem", choices=("i32", "f32"), default="i32")
    p.add_argument("--out-of-place", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--csv", metavar="PATH", default=None, help="write CSV here instead of stdout")


def _resolve_block_len(text: str) -> int:
    if text == "auto":
        info = detect_cache_info()
        if not info.l2_bytes:
            print(f"note: cache topology unavailable, using the 128K-element default "
                  f"(override with {L2_ELEMS_ENV})", file=sys.stderr)
        return default_block_len(info)
    return int(text)


def _case_config(args) -> bench.CaseConfig:
    n = args.n if args.n is not None else bench.default_case_elements(args.threads)
    return bench.CaseConfig(
        algo=args.algo, elem_type=args.elem, n=n, threads=args.threads,
        block_len=_resolve_block_len(args.block_len), d0=args.d0, d_last=args.d_last,
        out_of_place=args.out_of_place, seed=args.seed, reps=args.reps)


def cmd_scan(args) -> int:
    cfg = _case_config(args)
    data = bench.make_input(cfg.elem_type, cfg.n, cfg.seed)
    out = np.empty_like(data) if cfg.out_of_place else None
    total = bench._run_algorithm(cfg, data, out, bench._resolved_block_len(cfg))
    result = out if cfg.out_of_place else data
    print(f"algo={cfg.algo} n={cfg.n} elem={cfg.elem_type} "
          f"total={wrap_element(total, data.dtype)} checksum={bench.checksum(result)}")
    return 0


def cmd_verify(args) -> int:
    n = args.n if args.n is not None else 1 << 20
    threads, seed = args.threads, args.seed
    failures = 0
    print(f"verification matrix: n={n} threads={threads} seed={seed}")
    for elem in ("i32", "f32"):
        base = bench.make_input(elem, n, seed)
        expected = bench.oracle_scan(base)
        for algo in bench.ALGORITHMS:
            algo_threads = threads if algo in bench.MULTI_THREAD_ALGOS else 1
            for oop in (False, True):
                cfg = bench.CaseConfig(algo=algo, elem_type=elem, n=n,
                                       threads=algo_threads, seed=seed, out_of_place=oop,
                                       block_len=_resolve_block_len(args.block_len))
                work = base.copy()
                out = np.empty_like(base) if oop else None
                label = f"{algo:10s} {elem} {'out-of-place' if oop else 'in-place'}"
                try:
                    bench._run_algorithm(cfg, work, out, bench._resolved_block_len(cfg))
                    bench.verify_output(out if oop else work, expected, elem)
                except Exception as exc:
                    failures += 1
                    print(f"  FAIL {label}: {exc}")
                else:
                    print(f"  PASS {label}")
    if failures:
        print(f"{failures} combination(s) failed")
        return 1
    print("all combinations passed")
    return 0


def _emit(records, csv_path) -> None:
    if csv_path:
        with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
            bench.write_csv(records, fh)
    else:
        bench.write_csv(records, sys.stdout)


def cmd_bench(args) -> int:
    cfg = _case_config(args)
    if cfg.n == 0:
        print("note: empty input, throughput reported as 0", file=sys.stderr)
    rec = bench.run_case(cfg)
    _emit([rec], args.csv)
    return 0


def cmd_sweep(args) -> int:
    cfg = _case_config(args)
    values = [float(v) if args.dimension == "dilation" else int(v)
              for v in args.grid.split(",") if v]
    records, failures = bench.sweep(args.dimension, values, cfg)
    _emit(records, args.csv)
    for value, exc in failures:
        print(f"sweep point {value} failed: {exc}", file=sys.stderr)
    return 1 if failures and not records else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prefixscan",
        description="Prefix-sum algorithms: scalar, SIMD-style and multithreaded variants",
        epilog=f"Set {L2_ELEMS_ENV} to the L2 capacity in elements where cache "
               "topology queries fail (containers).")
    sub = parser.add_subparsers(dest="command", required=True)

    p_scan = sub.add_parser("scan", help="run one scan, print total and checksum")
    _add_case_flags(p_scan)
    p_scan.set_defaults(fn=cmd_scan)

    p_verify = sub.add_parser("verify", help="run the correctness matrix against the oracle")
    _add_case_flags(p_verify)
    p_verify.set_defaults(fn=cmd_verify)

    p_bench = sub.add_parser("bench", help="time one configuration, emit CSV")
    _add_case_flags(p_bench)
    p_bench.set_defaults(fn=cmd_bench)

    p_sweep = sub.add_parser("sweep", help="time a grid along one dimension, emit CSV")
    _add_case_flags(p_sweep)
    p_sweep.add_argument("--dimension", choices=("threads", "block_len", "dilation"),
                         required=True)
    p_sweep.add_argument("--grid", required=True, help="comma-separated values")
    p_sweep.set_defaults(fn=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, bench.BenchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ValueError) else 1
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
