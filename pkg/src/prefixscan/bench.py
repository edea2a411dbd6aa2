"""Benchmark harness: timed cases, sweeps, CSV output.

Each case generates seeded input, verifies the algorithm's output against
the sequential oracle once (a benchmark of a wrong result is meaningless),
then times repetitions of the bare scan call and reports the median. The
harness itself is single-threaded; parallelism lives inside the engine
under test, and no two cases ever run concurrently.
"""

from __future__ import annotations

import statistics
import time
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from . import simd
from .core import element_dtype, full_span, sequential_inclusive_scan
from .engine import ScanRequest, execute
from .plan import Dilation, SchemeId, default_block_len

FLOAT_RTOL = 1e-5

CSV_COLUMNS = ("algo", "elem_type", "n", "threads", "block_len", "d0", "d_last",
               "out_of_place", "reps", "median_ns", "throughput_eps", "checksum")

SINGLE_THREAD_ALGOS = ("Scalar", "SIMD", "SIMD-V1", "SIMD-V2", "SIMD-T")
MULTI_THREAD_ALGOS = ("Scalar1", "Scalar2", "SIMD1", "SIMD2",
                      "Scalar1-P", "Scalar2-P", "SIMD1-P", "SIMD2-P")
ALGORITHMS = SINGLE_THREAD_ALGOS + MULTI_THREAD_ALGOS

_MT_TABLE = {
    "Scalar1": ("scalar", SchemeId.SCAN_INCREMENT_PLUS_ONE, False),
    "Scalar2": ("scalar", SchemeId.ACCUMULATE_SCAN_PLUS_ONE, False),
    "SIMD1": ("simd", SchemeId.SCAN_INCREMENT_PLUS_ONE, False),
    "SIMD2": ("simd", SchemeId.ACCUMULATE_SCAN_PLUS_ONE, False),
    "Scalar1-P": ("scalar", SchemeId.SCAN_INCREMENT_PLUS_ONE, True),
    "Scalar2-P": ("scalar", SchemeId.ACCUMULATE_SCAN_PLUS_ONE, True),
    "SIMD1-P": ("simd", SchemeId.SCAN_INCREMENT_PLUS_ONE, True),
    "SIMD2-P": ("simd", SchemeId.ACCUMULATE_SCAN_PLUS_ONE, True),
}


class BenchError(RuntimeError):
    """A case could not produce a trustworthy measurement."""


@dataclass(frozen=True)
class CaseConfig:
    """One benchmark configuration (one future CSV row)."""

    algo: str = "Scalar"
    elem_type: str = "i32"
    n: int = 1 << 20
    threads: int = 1
    block_len: int = 0  # elements per thread per iteration; 0 = unpartitioned
    d0: float = 1.0
    d_last: float = 1.0
    out_of_place: bool = False
    seed: int = 0
    reps: int = 5
    lane_width: int = simd.DEFAULT_LANE_WIDTH

    def __post_init__(self):
        if self.algo not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algo!r}; expected one of {ALGORITHMS}")
        if self.reps < 5:
            raise ValueError("reps must be >= 5 (median needs a stable sample)")
        element_dtype(self.elem_type)


def default_case_elements(threads: int) -> int:
    """Desk-scale default input size: 2^24 elements per thread, 8-thread cap."""
    return (1 << 24) * max(1, min(threads, 8))


@dataclass
class BenchRecord:
    """One measured configuration with its derived throughput."""

    algo: str
    elem_type: str
    n: int
    threads: int
    block_len: int
    d0: float
    d_last: float
    out_of_place: bool
    reps: int
    rep_times_ns: list[int] = field(default_factory=list)
    median_ns: int = 0
    throughput_eps: float = 0.0
    checksum: int = 0

    def csv_row(self) -> str:
        return ",".join([
            self.algo, self.elem_type, str(self.n), str(self.threads),
            str(self.block_len), repr(self.d0), repr(self.d_last),
            str(int(self.out_of_place)), str(self.reps), str(self.median_ns),
            repr(self.throughput_eps), str(self.checksum),
        ])


def make_input(elem_type: str, n: int, seed: int) -> np.ndarray:
    """Seeded input data: uniform 32-bit ints, or floats uniform in [0, 1)."""
    rng = np.random.default_rng(seed)
    if elem_type == "i32":
        return rng.integers(0, 1 << 32, n, dtype=np.uint32)
    return rng.random(n, dtype=np.float32)


def checksum(buf: np.ndarray) -> int:
    return zlib.crc32(buf.tobytes())


def oracle_scan(data: np.ndarray) -> np.ndarray:
    out = data.copy()
    sequential_inclusive_scan(out, full_span(out))
    return out


def verify_output(got: np.ndarray, expected: np.ndarray, elem_type: str) -> None:
    """Exact in integer mode; elementwise relative tolerance for floats."""
    if elem_type == "i32":
        if not np.array_equal(got, expected):
            bad = int(np.flatnonzero(got != expected)[0])
            raise BenchError(f"integer output mismatch at index {bad}")
        return
    if got.shape[0] == 0:
        return
    e = expected.astype(np.float64)
    rel = np.abs(got.astype(np.float64) - e) / np.maximum(np.abs(e), 1e-30)
    worst = float(rel.max())
    if worst > FLOAT_RTOL:
        raise BenchError(f"float output off by {worst:.3e} relative (> {FLOAT_RTOL})")


def _resolved_block_len(cfg: CaseConfig) -> int:
    name = cfg.algo
    if name in ("Scalar", "SIMD"):
        return 0  # one-pass algorithms have no second pass to localize
    if name in _MT_TABLE:
        _, _, partitioned = _MT_TABLE[name]
        if not partitioned:
            return 0
        return cfg.block_len if cfg.block_len > 0 else default_block_len(lane_width=cfg.lane_width)
    return cfg.block_len  # vertical / tree honor any block size, 0 included


def _run_algorithm(cfg: CaseConfig, data: np.ndarray, out: np.ndarray | None,
                   block_len: int):
    """Dispatch one scan; returns the grand total (accumulator precision)."""
    name = cfg.algo
    span = full_span(data)
    if name == "Scalar":
        if out is None:
            return sequential_inclusive_scan(data, span)
        out[:] = data
        return sequential_inclusive_scan(out, span)
    if name == "SIMD":
        return simd.horizontal_scan(data, span, 0, cfg.lane_width, out=out)
    if name == "SIMD-V1":
        return simd.vertical_scan(data, span, 0, cfg.lane_width, True, block_len, out=out)
    if name == "SIMD-V2":
        return simd.vertical_scan(data, span, 0, cfg.lane_width, False, block_len, out=out)
    if name == "SIMD-T":
        return simd.tree_scan_auto(data, span, 0, cfg.lane_width, block_len, out=out)
    kernel, scheme, _ = _MT_TABLE[name]
    req = ScanRequest(data=data, out=out, kernel=kernel, scheme=scheme,
                      dilation=Dilation(cfg.d0, cfg.d_last), block_len=block_len,
                      threads=cfg.threads, lane_width=cfg.lane_width)
    return execute(req)


def run_case(cfg: CaseConfig) -> BenchRecord:
    """Measure one configuration.

    The output is verified against the oracle once before any timing; a
    failed verification aborts the case. One warm-up repetition is excluded
    from the statistics. Input copies happen outside the timed window.
    """
    block_len = _resolved_block_len(cfg)
    base = make_input(cfg.elem_type, cfg.n, cfg.seed)
    expected = oracle_scan(base) if cfg.n else base.copy()

    work = base.copy()
    out = np.empty_like(base) if cfg.out_of_place else None
    _run_algorithm(cfg, work, out, block_len)
    result = out if cfg.out_of_place else work
    verify_output(result, expected, cfg.elem_type)
    crc = checksum(result)

    times = []
    for rep in range(cfg.reps + 1):  # first rep is warm-up
        work = base.copy()
        t0 = time.perf_counter_ns()
        _run_algorithm(cfg, work, out, block_len)
        elapsed = time.perf_counter_ns() - t0
        if rep:
            times.append(elapsed)

    med = int(statistics.median(times))
    eps = cfg.n / (med / 1e9) if med > 0 and cfg.n else 0.0
    return BenchRecord(
        algo=cfg.algo, elem_type=cfg.elem_type, n=cfg.n, threads=cfg.threads,
        block_len=block_len, d0=cfg.d0, d_last=cfg.d_last,
        out_of_place=cfg.out_of_place, reps=cfg.reps, rep_times_ns=times,
        median_ns=med, throughput_eps=eps, checksum=crc)


def sweep(dimension: str, grid, base: CaseConfig):
    """One record per grid point along a dimension; failures don't stop it.

    Returns ``(records, failures)`` where failures are ``(value, error)``
    pairs. The input seed is shared across points so every point scans the
    same data.
    """
    if dimension not in ("threads", "block_len", "dilation"):
        raise ValueError(f"unknown sweep dimension {dimension!r}")
    grid = list(grid)
    if not grid:
        raise ValueError("empty sweep grid")
    records, failures = [], []
    for value in grid:
        if dimension == "threads":
            cfg = replace(base, threads=int(value))
        elif dimension == "block_len":
            cfg = replace(base, block_len=int(value))
        else:
            cfg = replace(base, d0=float(value))
        try:
            records.append(run_case(cfg))
        except Exception as exc:
            failures.append((value, exc))
    return records, failures


def write_csv(records, fh) -> None:
    """Fixed-schema CSV: one header row, one row per record, LF endings."""
    fh.write(",".join(CSV_COLUMNS) + "\n")
    for rec in records:
        fh.write(rec.csv_row() + "\n")
