"""Partition layout arithmetic and the cache-sized iteration grid.

Everything here is deterministic and thread-free: given an input length,
thread count, scheme, dilation factors and lane width, these functions
decide who processes which span in which pass. The engine only executes
what is planned here, which keeps the boundary arithmetic independently
testable.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass

from .core import Span

DEFAULT_BLOCK_ELEMENTS = 131072  # fallback partition size: 128K elements per thread
ELEMENT_SIZE = 4

L2_ELEMS_ENV = "PREFIXSCAN_L2_ELEMS"


class SchemeId(enum.Enum):
    """The four two-pass work organizations.

    Naming: which pass computes prefix sums, and whether an extra partition
    removes the idle thread. ``*_EQUAL`` variants split into ``m`` equal
    partitions and leave one (thread, pass) pair idle; ``*_PLUS_ONE``
    variants use ``m + 1`` partitions with thread 0 picking up the last
    partition so no thread idles.
    """

    SCAN_INCREMENT_EQUAL = "scan-increment"
    ACCUMULATE_SCAN_EQUAL = "accumulate-scan"
    SCAN_INCREMENT_PLUS_ONE = "scan-increment+1"
    ACCUMULATE_SCAN_PLUS_ONE = "accumulate-scan+1"

    @property
    def plus_one(self) -> bool:
        return self in (SchemeId.SCAN_INCREMENT_PLUS_ONE, SchemeId.ACCUMULATE_SCAN_PLUS_ONE)

    @property
    def scan_in_pass1(self) -> bool:
        return self in (SchemeId.SCAN_INCREMENT_EQUAL, SchemeId.SCAN_INCREMENT_PLUS_ONE)


class Role(enum.Enum):
    SCAN = "scan"
    ACCUMULATE = "accumulate"
    INCREMENT = "increment"
    IDLE = "idle"


@dataclass(frozen=True)
class Dilation:
    """Size ratios for the dilated partitions of the +1 schemes.

    ``d0`` scales thread 0's distinguished partition (the extra last
    partition under scan-increment+1, the first partition under
    accumulate-scan+1); ``d_last`` scales the extra last partition of
    accumulate-scan+1 only. Both in [0, 1]; 1 means equal sizes and 0
    collapses the scheme to its equal-partition counterpart.
    """

    d0: float = 1.0
    d_last: float = 1.0

    def __post_init__(self):
        for name, v in (("d0", self.d0), ("d_last", self.d_last)):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")


@dataclass(frozen=True)
class WorkItem:
    """One unit of pass work: a thread applies a role to one span."""

    thread: int
    span_index: int
    role: Role
    seeded: bool = False  # pass-1 scan seeded with the running carry


@dataclass(frozen=True)
class PartitionLayout:
    """Spans of one region plus the per-pass work assignments."""

    spans: tuple[Span, ...]
    pass1: tuple[WorkItem, ...]
    pass2: tuple[WorkItem, ...]
    scheme: SchemeId
    threads: int

    def idle_threads(self, pass_items: tuple[WorkItem, ...]) -> set[int]:
        """Threads with no non-empty work in a pass."""
        busy = {it.thread for it in pass_items if self.spans[it.span_index].len > 0}
        return set(range(self.threads)) - busy

    def coverage(self) -> int:
        return sum(s.len for s in self.spans)


@dataclass(frozen=True)
class IterationGrid:
    """The input cut into cache-sized regions, one layout per region."""

    n: int
    block_len: int
    regions: tuple[Span, ...]
    layouts: tuple[PartitionLayout, ...]

    @property
    def iterations(self) -> int:
        return len(self.regions)


def _align_down(x: int, w: int) -> int:
    return (x // w) * w


def _single_thread_layout(start: int, n: int, scheme: SchemeId, m: int) -> PartitionLayout:
    spans = (Span(start, n),)
    if scheme is SchemeId.ACCUMULATE_SCAN_EQUAL or scheme is SchemeId.ACCUMULATE_SCAN_PLUS_ONE:
        # keep the accumulate-then-scan shape so ledger bookkeeping stays uniform
        return PartitionLayout(spans, (WorkItem(0, 0, Role.ACCUMULATE),),
                               (WorkItem(0, 0, Role.SCAN),), scheme, m)
    return PartitionLayout(spans, (WorkItem(0, 0, Role.SCAN, seeded=True),), (), scheme, m)


def compute_layout(n: int, m: int, scheme: SchemeId, dilation: Dilation = Dilation(),
                   lane_width: int = 1, start: int = 0,
                   need_last_total: bool = False) -> PartitionLayout:
    """Partition ``[start, start + n)`` for ``m`` threads under a scheme.

    Equal schemes emit ``m`` spans, +1 schemes ``m + 1`` with the dilated
    spans sized ``round(d * base)``; every span except the last is aligned
    to ``lane_width`` and the last absorbs the rounding residue. Degenerate
    inputs (``n < m * lane_width``) fall back to a single-thread layout.

    ``need_last_total`` makes the otherwise-idle last thread of
    accumulate-scan accumulate its span too, which partitioned execution
    requires to chain the carry between iterations.
    """
    if n < 0 or m < 1:
        raise ValueError(f"invalid layout request n={n} m={m}")
    w = max(1, lane_width)

    if scheme.plus_one and dilation.d0 == 0.0:
        # the dilated partition is nonexistent: exactly the equal scheme
        scheme = (SchemeId.SCAN_INCREMENT_EQUAL if scheme.scan_in_pass1
                  else SchemeId.ACCUMULATE_SCAN_EQUAL)

    if scheme.plus_one:
        if scheme is SchemeId.SCAN_INCREMENT_PLUS_ONE:
            base = _align_down(int(n // (m + dilation.d0)), w)
        else:
            base = _align_down(int(n // (m - 1 + dilation.d0 + dilation.d_last)), w)
    else:
        base = _align_down(n // m, w)

    if n < m * w or base == 0:
        return _single_thread_layout(start, n, scheme, m)

    if scheme is SchemeId.SCAN_INCREMENT_EQUAL:
        lengths = [base] * (m - 1) + [n - base * (m - 1)]
        spans = _spans_from(start, lengths)
        pass1 = tuple(WorkItem(j, j, Role.SCAN, seeded=(j == 0)) for j in range(m))
        pass2 = tuple(WorkItem(j, j, Role.INCREMENT) for j in range(1, m))
        return PartitionLayout(spans, pass1, pass2, scheme, m)

    if scheme is SchemeId.ACCUMULATE_SCAN_EQUAL:
        lengths = [base] * (m - 1) + [n - base * (m - 1)]
        spans = _spans_from(start, lengths)
        p1_count = m if need_last_total else m - 1
        pass1 = tuple(WorkItem(j, j, Role.ACCUMULATE) for j in range(p1_count))
        pass2 = tuple(WorkItem(j, j, Role.SCAN) for j in range(m))
        return PartitionLayout(spans, pass1, pass2, scheme, m)

    if scheme is SchemeId.SCAN_INCREMENT_PLUS_ONE:
        # m base spans scanned in pass 1; thread 0 scans the dilated last span
        # in pass 2 while the rest increment the span they already own.
        lengths = [base] * m + [n - base * m]
        spans = _spans_from(start, lengths)
        pass1 = tuple(WorkItem(j, j, Role.SCAN, seeded=(j == 0)) for j in range(m))
        pass2 = tuple(WorkItem(j, j, Role.INCREMENT) for j in range(1, m)) + (WorkItem(0, m, Role.SCAN),)
        return PartitionLayout(spans, pass1, pass2, scheme, m)

    # ACCUMULATE_SCAN_PLUS_ONE: thread 0 scans the dilated first span while
    # the others accumulate; in pass 2 everyone scans, thread 0 on the last.
    first = _align_down(int(dilation.d0 * base), w)
    lengths = [first] + [base] * (m - 1) + [n - first - base * (m - 1)]
    spans = _spans_from(start, lengths)
    pass1 = (WorkItem(0, 0, Role.SCAN, seeded=True),) + tuple(
        WorkItem(j, j, Role.ACCUMULATE) for j in range(1, m))
    pass2 = tuple(WorkItem(j, j, Role.SCAN) for j in range(1, m)) + (WorkItem(0, m, Role.SCAN),)
    return PartitionLayout(spans, pass1, pass2, scheme, m)


def _spans_from(start: int, lengths: list[int]) -> tuple[Span, ...]:
    spans = []
    pos = start
    for ln in lengths:
        if ln < 0:
            raise ValueError(f"negative span length {ln} in layout")
        spans.append(Span(pos, ln))
        pos += ln
    return tuple(spans)


def compute_grid(n: int, m: int, scheme: SchemeId, dilation: Dilation = Dilation(),
                 block_len: int = 0, lane_width: int = 1) -> IterationGrid:
    """Cut ``[0, n)`` into regions of ``block_len * m`` elements.

    Each region carries its own layout; the final region may be short.
    ``block_len = 0`` disables partitioning (a single region, i.e. the
    plain two-pass algorithm). Accumulate-scan layouts inside a
    multi-iteration grid always compute the last partition's total so the
    next iteration's carry is available.
    """
    if block_len < 0:
        raise ValueError(f"block_len must be >= 0, got {block_len}")
    region_len = block_len * m if block_len > 0 else n
    if region_len <= 0:
        region_len = max(n, 1)
    regions = []
    pos = 0
    while pos < n:
        ln = min(region_len, n - pos)
        regions.append(Span(pos, ln))
        pos += ln
    if not regions:
        regions = [Span(0, 0)]
    # Only iterations with a successor need the last partition's total (it
    # feeds the next carry); the final iteration keeps the scheme's idle slot.
    last = len(regions) - 1
    layouts = tuple(
        compute_layout(r.len, m, scheme, dilation, lane_width, start=r.start,
                       need_last_total=(i != last))
        for i, r in enumerate(regions))
    return IterationGrid(n, block_len, tuple(regions), layouts)


# --- cache topology ---------------------------------------------------------

@dataclass(frozen=True)
class CacheInfo:
    """Per-core cache capacities in bytes; None where unknown."""

    l1d_bytes: int | None = None
    l2_bytes: int | None = None
    l3_bytes: int | None = None
    threads_per_core: int = 1


def _parse_size(text: str) -> int | None:
    text = text.strip()
    try:
        if text.endswith("K"):
            return int(text[:-1]) * 1024
        if text.endswith("M"):
            return int(text[:-1]) * 1024 * 1024
        return int(text)
    except ValueError:
        return None


def detect_cache_info() -> CacheInfo:
    """Query the platform cache topology (Linux sysfs), best effort.

    Unknown fields stay None and callers fall back to the documented
    defaults. The ``PREFIXSCAN_L2_ELEMS`` environment variable overrides the
    L2 capacity (expressed in 4-byte elements) for containers where the
    topology is hidden.
    """
    l1d = l2 = l3 = None
    tpc = 1
    base = "/sys/devices/system/cpu/cpu0"
    try:
        cache_dir = os.path.join(base, "cache")
        for entry in sorted(os.listdir(cache_dir)):
            if not entry.startswith("index"):
                continue
            d = os.path.join(cache_dir, entry)
            try:
                with open(os.path.join(d, "level")) as f:
                    level = int(f.read().strip())
                with open(os.path.join(d, "type")) as f:
                    ctype = f.read().strip()
                with open(os.path.join(d, "size")) as f:
                    size = _parse_size(f.read())
            except (OSError, ValueError):
                continue
            if size is None:
                continue
            if level == 1 and ctype in ("Data", "Unified"):
                l1d = size
            elif level == 2:
                l2 = size
            elif level == 3:
                l3 = size
    except OSError:
        pass
    try:
        with open(os.path.join(base, "topology", "thread_siblings_list")) as f:
            tpc = max(1, _count_cpu_list(f.read()))
    except OSError:
        pass
    env = os.environ.get(L2_ELEMS_ENV)
    if env:
        try:
            l2 = int(env) * ELEMENT_SIZE
        except ValueError:
            pass
    return CacheInfo(l1d_bytes=l1d, l2_bytes=l2, l3_bytes=l3, threads_per_core=tpc)


def _count_cpu_list(text: str) -> int:
    count = 0
    for part in text.strip().split(","):
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-")
            count += int(hi) - int(lo) + 1
        else:
            count += 1
    return count


def default_block_len(cache_info: CacheInfo | None = None, threads_per_core: int | None = None,
                      lane_width: int = 1) -> int:
    """Partition size in elements: half the L2 per thread sharing the core.

    ``(l2_bytes / 2 / element_size) / threads_per_core`` rounded down to a
    lane-width multiple; an unknown L2 falls back to 131072 elements.
    """
    info = cache_info if cache_info is not None else detect_cache_info()
    tpc = threads_per_core if threads_per_core is not None else info.threads_per_core
    tpc = max(1, tpc)
    if info.l2_bytes:
        per_thread = info.l2_bytes // 2 // ELEMENT_SIZE // tpc
    else:
        per_thread = DEFAULT_BLOCK_ELEMENTS
    w = max(1, lane_width)
    return max(w, _align_down(per_thread, w))
