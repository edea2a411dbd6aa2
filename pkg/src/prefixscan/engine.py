"""Multithreaded scan execution: two-pass schemes and partitioned pipeline.

A ``ScanEngine`` owns a pool of worker threads plus one reusable counting
barrier. Executing a request walks the iteration grid produced by the plan
module; within each iteration the workers run pass 1, meet at the barrier
exactly once, then run pass 2. Pass 2 of iteration ``k`` may overlap pass 1
of iteration ``k + 1`` — the per-partition sums ledger is double-buffered so
the overlap can never clobber totals still being read. All numeric work
happens inside nogil-compiled kernels, so the workers genuinely run in
parallel on multicore hosts.

Carry chaining between iterations, by scheme:

* scan-increment: thread 0 seeds its pass-1 scan with the carry, so ledger
  slot 0 holds the running (not local) total and pass-2 offsets are plain
  ledger prefix sums; thread 0 refreshes the carry by folding the ledger.
* accumulate-scan: the ledger holds local totals; every worker folds the
  full ledger into its own carry copy (identical fold order keeps float
  results bit-identical across workers).
* the +1 schemes: thread 0 owns the last partition's pass-2 scan, and its
  return value is the next carry directly — no fold needed.
"""

from __future__ import annotations

import os
import threading
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import Span, accumulator_zero
from .core import _accumulate_kernel, _increment_kernel, _scan_kernel
from .plan import Dilation, IterationGrid, PartitionLayout, Role, SchemeId, WorkItem, compute_grid
from .simd import _HORIZONTAL, _SIMD_ACCUMULATE, DEFAULT_LANE_WIDTH, SUPPORTED_LANE_WIDTHS

KERNELS = ("scalar", "simd")


class ReusableBarrier:
    """Counting barrier: arrival counter plus generation marker, reusable.

    Arrivals are counted under a lock; the last arriver resets the count,
    advances the generation and wakes everyone. Waiters spin on the
    generation a bounded number of times (cheap when all cores are busy in
    compute for similar durations) and then park on a condition variable,
    which keeps oversubscribed hosts from burning their timeslices.
    """

    def __init__(self, parties: int, spin_limit: int = 200):
        if parties < 1:
            raise ValueError("barrier needs at least one participant")
        self.parties = parties
        self.generation = 0
        self._count = 0
        self._spin = spin_limit
        self._cond = threading.Condition()

    def wait(self) -> None:
        with self._cond:
            gen = self.generation
            self._count += 1
            if self._count == self.parties:
                self._count = 0
                self.generation = gen + 1
                self._cond.notify_all()
                return
        for _ in range(self._spin):
            if self.generation != gen:
                return
        with self._cond:
            self._cond.wait_for(lambda: self.generation != gen)


@dataclass
class ScanRequest:
    """One scan invocation: buffers, algorithm selection, tuning knobs."""

    data: np.ndarray
    out: np.ndarray | None = None
    kernel: str = "scalar"
    scheme: SchemeId = SchemeId.SCAN_INCREMENT_PLUS_ONE
    dilation: Dilation = field(default_factory=Dilation)
    block_len: int = 0
    threads: int = 1
    affinity: str = "none"
    lane_width: int = DEFAULT_LANE_WIDTH
    collect_stats: bool = False
    delay_hook: Callable[[int, int, str], None] | None = None

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ValueError(f"kernel {self.kernel!r} not one of {KERNELS}")
        if self.affinity not in ("none", "compact"):
            raise ValueError(f"unknown affinity policy {self.affinity!r}")
        if self.lane_width not in SUPPORTED_LANE_WIDTHS:
            raise ValueError(f"lane width {self.lane_width} not in {SUPPORTED_LANE_WIDTHS}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.out is not None:
            if self.out.shape != self.data.shape or self.out.dtype != self.data.dtype:
                raise ValueError("output buffer must match input shape and dtype")
            if np.shares_memory(self.out, self.data):
                raise ValueError("out-of-place buffers must not overlap")


@dataclass
class RunStats:
    """Instrumentation collected for one run (when requested)."""

    iterations: int = 0
    barrier_waits: int = 0
    sync_points: int = 0
    # roles[k][pass_index] -> list of (thread, role, span_len)
    roles: list = field(default_factory=list)

    def idle_pairs(self, threads: int) -> list[tuple[int, int, int]]:
        """(iteration, pass, thread) triples where a thread did no real work."""
        pairs = []
        for k, passes in enumerate(self.roles):
            for p, items in enumerate(passes):
                busy = {t for t, _, ln in items if ln > 0}
                for t in range(threads):
                    if t not in busy:
                        pairs.append((k, p + 1, t))
        return pairs


class _Job:
    __slots__ = ("request", "grid", "ledger", "stats", "errors", "failed",
                 "done", "result")

    def __init__(self, request: ScanRequest, grid: IterationGrid, ledger: np.ndarray):
        self.request = request
        self.grid = grid
        self.ledger = ledger
        self.stats = None
        if request.collect_stats:
            self.stats = RunStats(iterations=grid.iterations)
            self.stats.roles = [([], []) for _ in range(grid.iterations)]
        self.errors: list = []
        self.failed = False
        self.done = 0
        self.result = None


class ScanEngine:
    """Persistent worker pool executing scan requests one at a time.

    ``run`` is externally synchronized: one scan per engine instance at a
    time. Distinct engines are independent. Workers are created lazily on
    the first run and live until ``close``.
    """

    def __init__(self, threads: int = 1, affinity: str = "none"):
        if threads < 1:
            raise ValueError("threads must be >= 1")
        if affinity not in ("none", "compact"):
            raise ValueError(f"unknown affinity policy {affinity!r}")
        ncpu = os.cpu_count() or 1
        if threads > ncpu:
            warnings.warn(
                f"{threads} workers on {ncpu} CPUs: oversubscribed, correctness "
                "is unaffected but throughput will suffer", RuntimeWarning, stacklevel=2)
        self.threads = threads
        self.affinity = affinity
        self.barrier = ReusableBarrier(threads)
        self._cond = threading.Condition()
        self._job: _Job | None = None
        self._job_seq = 0
        self._shutdown = False
        self._workers: list[threading.Thread] = []
        self.last_stats: RunStats | None = None

    # -- pool management ----------------------------------------------------

    def _ensure_workers(self) -> None:
        if self._workers:
            return
        for wid in range(self.threads):
            t = threading.Thread(target=self._worker_loop, args=(wid,),
                                 name=f"scan-worker-{wid}", daemon=True)
            t.start()
            self._workers.append(t)

    def close(self) -> None:
        if not self._workers:
            return
        with self._cond:
            self._shutdown = True
            self._job_seq += 1
            self._cond.notify_all()
        for t in self._workers:
            t.join()
        self._workers = []

    def __enter__(self) -> "ScanEngine":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- execution ------------------------------------------------------------

    def run_two_pass(self, request: ScanRequest):
        """Plain two-pass execution (one barrier between the passes)."""
        if request.block_len != 0:
            raise ValueError("two-pass execution expects block_len == 0")
        return self.run(request)

    def run_partitioned(self, request: ScanRequest):
        """Cache-partitioned execution (one barrier per iteration)."""
        if request.block_len <= 0:
            raise ValueError("partitioned execution expects block_len > 0")
        return self.run(request)

    def run(self, request: ScanRequest):
        """Execute a request; returns the grand total in accumulator precision."""
        if request.threads != self.threads:
            raise ValueError(f"request wants {request.threads} threads, engine has {self.threads}")
        if request.affinity != self.affinity:
            raise ValueError(f"request wants affinity {request.affinity!r}, engine has {self.affinity!r}")
        grid = compute_grid(request.data.shape[0], self.threads, request.scheme,
                            request.dilation, request.block_len, request.lane_width)
        max_spans = max(len(l.spans) for l in grid.layouts)
        acc_zero = accumulator_zero(request.data.dtype)
        ledger = np.zeros((2, max_spans), np.dtype(type(acc_zero)))
        job = _Job(request, grid, ledger)

        self._ensure_workers()
        gen_before = self.barrier.generation
        with self._cond:
            self._job = job
            self._job_seq += 1
            self._cond.notify_all()
        with self._cond:
            self._cond.wait_for(lambda: job.done == self.threads)
            self._job = None
        if job.errors:
            wid, exc = job.errors[0]
            raise RuntimeError(f"worker {wid} failed") from exc
        if job.stats is not None:
            job.stats.barrier_waits = self.barrier.generation - gen_before
            job.stats.sync_points = job.stats.barrier_waits + 1  # plus the final join
            self.last_stats = job.stats
        return job.result

    # -- worker side ----------------------------------------------------------

    def _worker_loop(self, wid: int) -> None:
        if self.affinity == "compact":
            try:
                cpus = sorted(os.sched_getaffinity(0))
                os.sched_setaffinity(0, {cpus[wid % len(cpus)]})
            except (AttributeError, OSError):
                pass  # unsupported platform: affinity is best-effort
        seen = 0
        while True:
            with self._cond:
                self._cond.wait_for(lambda: self._job_seq != seen)
                seen = self._job_seq
                if self._shutdown:
                    return
                job = self._job
            try:
                self._execute(wid, job)
            except BaseException as exc:  # engine invariant violated; surface it
                job.failed = True
                job.errors.append((wid, exc))
            finally:
                with self._cond:
                    job.done += 1
                    if job.done == self.threads:
                        self._cond.notify_all()

    def _execute(self, wid: int, job: _Job) -> None:
        req = job.request
        src = req.data
        dst = req.data if req.out is None else req.out
        w = req.lane_width
        zero = accumulator_zero(src.dtype)
        scan_k = _scan_kernel if req.kernel == "scalar" else _HORIZONTAL[w]
        hook = req.delay_hook

        carry = zero
        for k, layout in enumerate(job.grid.layouts):
            row = job.ledger[k % 2]
            spans = layout.spans
            if not job.failed:
                try:
                    if hook is not None:
                        hook(wid, k, "pass1")
                    for item in layout.pass1:
                        if item.thread != wid:
                            continue
                        sp = spans[item.span_index]
                        if item.role is Role.SCAN:
                            seed = carry if item.seeded else zero
                            row[item.span_index] = scan_k(src, dst, sp.start, sp.len, seed)
                        else:  # ACCUMULATE reads the source buffer and writes nothing
                            if req.kernel == "scalar":
                                row[item.span_index] = _accumulate_kernel(src, sp.start, sp.len, zero)
                            else:
                                row[item.span_index] = _SIMD_ACCUMULATE[w](src, sp.start, sp.len, zero)
                        self._record(job, k, 0, wid, item, sp)
                except BaseException as exc:
                    job.failed = True
                    job.errors.append((wid, exc))

            # the one synchronization point per iteration; kept even on
            # failure so every worker drains the grid in lockstep
            self.barrier.wait()

            if job.failed:
                continue
            try:
                if hook is not None:
                    hook(wid, k, "pass2")
                # when a seeded pass-1 scan folded the carry into ledger slot 0,
                # offsets are plain ledger prefixes; otherwise the carry is added here
                base = zero if any(it.seeded for it in layout.pass1) else carry
                last_scan_total = None
                for item in layout.pass2:
                    if item.thread != wid:
                        continue
                    sp = spans[item.span_index]
                    offset = base
                    for i in range(item.span_index):
                        offset = offset + row[i]
                    if item.role is Role.INCREMENT:
                        if sp.len:
                            _increment_kernel(dst, sp.start, sp.len, offset)
                    else:  # SCAN: out-of-place pass-2 scans read the input buffer
                        last_scan_total = scan_k(src, dst, sp.start, sp.len, offset)
                    self._record(job, k, 1, wid, item, sp)
                carry = self._next_carry(layout, row, carry, zero, wid, last_scan_total)
            except BaseException as exc:
                job.failed = True
                job.errors.append((wid, exc))

        if not job.failed and self._result_owner(job.grid.layouts[-1]) == wid:
            job.result = carry

    def _next_carry(self, layout: PartitionLayout, row, carry, zero, wid, last_scan_total):
        scheme = layout.scheme
        if scheme is SchemeId.ACCUMULATE_SCAN_EQUAL:
            # every worker folds the same locals in the same order
            if len(layout.pass1) == len(layout.spans):
                acc = carry
                for i in range(len(layout.spans)):
                    acc = acc + row[i]
                return acc
            # final iteration: the last span's total was never computed; only
            # the thread scanning the last span knows the true running total
            if last_scan_total is not None and layout.pass2 and \
                    layout.pass2[-1].thread == wid:
                return last_scan_total
            return carry
        if scheme is SchemeId.SCAN_INCREMENT_EQUAL:
            if wid != 0:
                return carry
            acc = zero  # ledger slot 0 already includes the old carry
            for i in range(len(layout.spans)):
                acc = acc + row[i]
            return acc
        # +1 schemes: thread 0 scanned the last partition in pass 2 and its
        # return value is the running total through this iteration
        if wid == 0:
            if last_scan_total is not None:
                return last_scan_total
            acc = zero
            for i in range(len(layout.spans)):
                acc = acc + row[i]
            return acc
        return carry

    @staticmethod
    def _result_owner(final_layout: PartitionLayout) -> int:
        scheme = final_layout.scheme
        if scheme is SchemeId.ACCUMULATE_SCAN_EQUAL and final_layout.pass2:
            return final_layout.pass2[-1].thread
        return 0

    @staticmethod
    def _record(job: _Job, k: int, pass_index: int, wid: int, item: WorkItem, sp: Span) -> None:
        stats = job.stats
        if stats is None:
            return
        stats.roles[k][pass_index].append((wid, item.role, sp.len))


_ENGINE_CACHE: dict[tuple[int, str], ScanEngine] = {}
_ENGINE_CACHE_LOCK = threading.Lock()


def shared_engine(threads: int, affinity: str = "none") -> ScanEngine:
    """Process-wide engine cache so repeated runs reuse warm worker pools."""
    key = (threads, affinity)
    with _ENGINE_CACHE_LOCK:
        eng = _ENGINE_CACHE.get(key)
        if eng is None:
            eng = ScanEngine(threads, affinity)
            _ENGINE_CACHE[key] = eng
        return eng


def execute(request: ScanRequest):
    """Run one request on the shared engine matching its thread/affinity config."""
    return shared_engine(request.threads, request.affinity).run(request)
