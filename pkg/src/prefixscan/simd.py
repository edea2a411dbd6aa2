"""Data-parallel scan kernels over an abstract vector of ``w`` 32-bit lanes.

Three families:

* horizontal — in-register prefix sums via log2(w) shift-and-add rounds,
  with the running carry broadcast between consecutive blocks;
* vertical — the buffer split into ``w`` equal chunks scanned column-wise
  with strided gather/scatter, globalized by a second pass;
* tree — up-sweep reduction then down-sweep distribution over a conceptual
  balanced binary tree (work-efficient, exclusive scan converted to
  inclusive by one extra pass).

``w`` is a compile-time constant per kernel (4, 8 or 16; 16 matches 512-bit
vectors of 32-bit elements). Gather/scatter is emulated with strided scalar
loops behind the same interface; correctness is identical, performance
claims only hold where the compiler maps them onto vector hardware.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import Span, accumulator_zero, coerce_offset

SUPPORTED_LANE_WIDTHS = (4, 8, 16)
DEFAULT_LANE_WIDTH = 16


@dataclass
class AddRoundCounter:
    """Counts shift-add rounds executed by ``vector_inclusive_scan``."""

    rounds: int = 0


def lane_shift_with_zero_fill(v: np.ndarray, k: int) -> np.ndarray:
    """Shift lanes up by ``k``, filling vacated low lanes with zero.

    Result lane ``i`` equals input lane ``i - k`` for ``i >= k``. This is the
    whole-register lane shift that has to be synthesized (concatenate against
    a zero vector and extract) because no direct instruction exists.
    """
    w = v.shape[0]
    if not 0 <= k <= w:
        raise ValueError(f"shift count {k} outside [0, {w}]")
    out = np.zeros_like(v)
    if k < w:
        out[k:] = v[: w - k]
    return out


def vector_inclusive_scan(v: np.ndarray, counter: AddRoundCounter | None = None) -> np.ndarray:
    """In-register inclusive scan of one ``w``-lane block.

    Exactly log2(w) shift-add rounds with shift amounts 1, 2, ..., w/2.
    Additions happen in the element dtype, matching what the bulk kernels do
    per block. Pass a counter to assert the round count in tests.
    """
    w = v.shape[0]
    if w == 0 or w & (w - 1):
        raise ValueError(f"lane count {w} is not a power of two")
    out = v.copy()
    sh = 1
    while sh < w:
        out = out + lane_shift_with_zero_fill(out, sh)
        if counter is not None:
            counter.rounds += 1
        sh <<= 1
    return out


def _make_horizontal_kernel(w):
    # w is baked in as a compile-time constant so the per-block round loops
    # have fixed trip counts the compiler can unroll and vectorize.
    @njit(nogil=True)
    def kernel(src, dst, start, length, offset):
        acc = offset
        v = np.empty(w, src.dtype)
        end = start + length
        b = start
        while b + w <= end:
            for j in range(w):
                v[j] = src[b + j]
            sh = 1
            while sh < w:
                for j in range(w - 1, sh - 1, -1):
                    v[j] = v[j] + v[j - sh]
                sh <<= 1
            for j in range(w):
                dst[b + j] = v[j] + acc
            acc = acc + v[w - 1]
            b += w
        for i in range(b, end):
            acc = acc + src[i]
            dst[i] = acc
        return acc

    return kernel


def _make_simd_accumulate_kernel(w):
    @njit(nogil=True)
    def kernel(src, start, length, zero):
        part = np.full(w, zero)
        end = start + length
        b = start
        while b + w <= end:
            for j in range(w):
                part[j] = part[j] + src[b + j]
            b += w
        acc = zero
        for j in range(w):
            acc = acc + part[j]
        for i in range(b, end):
            acc = acc + src[i]
        return acc

    return kernel


_HORIZONTAL = {w: _make_horizontal_kernel(w) for w in SUPPORTED_LANE_WIDTHS}
_SIMD_ACCUMULATE = {w: _make_simd_accumulate_kernel(w) for w in SUPPORTED_LANE_WIDTHS}


def _check_width(w: int) -> int:
    if w not in SUPPORTED_LANE_WIDTHS:
        raise ValueError(f"lane width {w} unsupported; choose from {SUPPORTED_LANE_WIDTHS}")
    return w


def horizontal_scan(data: np.ndarray, span: Span, offset=0, w: int = DEFAULT_LANE_WIDTH,
                    out: np.ndarray | None = None):
    """Single-pass blockwise scan: per-block in-register scan plus carry.

    Loads ``w`` elements, scans them in-register, adds the broadcast carry,
    stores, and folds the block's last lane into the carry; the sub-``w``
    remainder is finished scalar. Writes in place unless ``out`` is given.
    Returns the final running total in accumulator precision.
    """
    _check_width(w)
    span.check(data)
    dst = data if out is None else out
    if out is not None:
        span.check(out)
    return _HORIZONTAL[w](data, dst, span.start, span.len, coerce_offset(offset, data.dtype))


def simd_accumulate(data: np.ndarray, span: Span, w: int = DEFAULT_LANE_WIDTH):
    """Span total via ``w`` lane-wise partial sums folded at the end.

    Read-only like the scalar accumulate; the lane structure only changes
    the association order, which integer wraparound ignores entirely.
    """
    _check_width(w)
    span.check(data)
    return _SIMD_ACCUMULATE[w](data, span.start, span.len, accumulator_zero(data.dtype))


# --- vertical family ------------------------------------------------------

@njit(nogil=True, cache=True)
def _vertical_pass1_scan(data, start, k, carry, totals):
    w = totals.shape[0]
    run = np.zeros(w, totals.dtype)
    run[0] = carry
    for j in range(k):
        for lane in range(w):
            idx = start + lane * k + j
            run[lane] = run[lane] + data[idx]
            data[idx] = run[lane]
    for lane in range(w):
        totals[lane] = run[lane]


@njit(nogil=True, cache=True)
def _vertical_pass1_accumulate(data, start, k, totals):
    w = totals.shape[0]
    run = np.zeros(w, totals.dtype)
    for j in range(k):
        for lane in range(w):
            run[lane] = run[lane] + data[start + lane * k + j]
    for lane in range(w):
        totals[lane] = run[lane]


@njit(nogil=True, cache=True)
def _vertical_pass2_increment(data, start, k, offsets):
    w = offsets.shape[0]
    for j in range(k):
        for lane in range(w):
            idx = start + lane * k + j
            data[idx] = data[idx] + offsets[lane]


@njit(nogil=True, cache=True)
def _vertical_pass2_scan(data, start, k, offsets):
    w = offsets.shape[0]
    run = offsets.copy()
    for j in range(k):
        for lane in range(w):
            idx = start + lane * k + j
            run[lane] = run[lane] + data[idx]
            data[idx] = run[lane]


def _chunk_len(region: Span, w: int) -> int:
    if region.len % w:
        raise ValueError(f"region length {region.len} not divisible by lane width {w}")
    return region.len // w


def vertical_scan_pass1_scan(data: np.ndarray, region: Span, carry_in,
                             totals_out: np.ndarray) -> None:
    """First vertical pass, scan flavor: local inclusive scan per lane-chunk.

    Chunk ``i`` covers ``region[i*k : (i+1)*k]`` with ``k = len/w``; each
    step gathers one element per chunk at stride ``k``, adds it to the
    running-sums vector, and scatters the result back. Lane 0 is seeded with
    ``carry_in``. On return ``totals_out[i]`` holds chunk ``i``'s running
    total (so lane 0's includes the carry), ready for an exclusive scan to
    become pass-2 offsets.
    """
    region.check(data)
    w = totals_out.shape[0]
    k = _chunk_len(region, w)
    _vertical_pass1_scan(data, region.start, k, coerce_offset(carry_in, data.dtype), totals_out)


def vertical_scan_pass1_accumulate(data: np.ndarray, region: Span,
                                   totals_out: np.ndarray) -> None:
    """First vertical pass, accumulate flavor: chunk totals only, no writes."""
    region.check(data)
    w = totals_out.shape[0]
    k = _chunk_len(region, w)
    _vertical_pass1_accumulate(data, region.start, k, totals_out)


def vertical_scan_pass2_increment(data: np.ndarray, region: Span,
                                  chunk_offsets: np.ndarray) -> None:
    """Second vertical pass after a scan-flavor pass 1: add per-chunk offsets."""
    region.check(data)
    k = _chunk_len(region, chunk_offsets.shape[0])
    _vertical_pass2_increment(data, region.start, k, chunk_offsets)


def vertical_scan_pass2_scan(data: np.ndarray, region: Span,
                             chunk_offsets: np.ndarray) -> None:
    """Second vertical pass after an accumulate-flavor pass 1.

    Computes the global prefix sums column-wise, seeding each chunk's
    running sum with its offset.
    """
    region.check(data)
    k = _chunk_len(region, chunk_offsets.shape[0])
    _vertical_pass2_scan(data, region.start, k, chunk_offsets)


def exclusive_offsets(totals: np.ndarray, seed) -> np.ndarray:
    """Exclusive scan of per-chunk totals: offset[i] = seed + sum(totals[:i])."""
    out = np.empty_like(totals)
    acc = seed
    for i in range(totals.shape[0]):
        out[i] = acc
        acc = acc + totals[i]
    return out


def vertical_scan(data: np.ndarray, span: Span, offset=0, w: int = DEFAULT_LANE_WIDTH,
                  scan_in_pass1: bool = True, block_len: int = 0,
                  out: np.ndarray | None = None):
    """Full two-pass vertical scan over an arbitrary span.

    Processes the span in regions of ``block_len`` elements (0 means one
    region) so the second pass can reuse cached data; each region's length
    is trimmed to a multiple of ``w`` and the remainder is delegated to
    ``horizontal_scan``. ``scan_in_pass1`` picks between the two pass
    orders. Returns the running total in accumulator precision.
    """
    _check_width(w)
    span.check(data)
    target = data
    if out is not None:
        span.check(out)
        out[span.start:span.end] = data[span.start:span.end]
        target = out
    acc = coerce_offset(offset, data.dtype)
    zero = accumulator_zero(data.dtype)
    totals = np.empty(w, np.dtype(type(zero)))
    pos, end = span.start, span.end
    step = block_len if block_len > 0 else max(span.len, 1)
    while pos < end:
        region_len = min(step, end - pos)
        aligned = region_len - region_len % w
        if aligned:
            region = Span(pos, aligned)
            if scan_in_pass1:
                vertical_scan_pass1_scan(target, region, acc, totals)
                # lane 0's total already carries the seed, so offsets scan from zero
                offs = exclusive_offsets(totals, zero)
                vertical_scan_pass2_increment(target, region, offs)
                acc = _fold(totals, zero)
            else:
                vertical_scan_pass1_accumulate(target, region, totals)
                offs = exclusive_offsets(totals, acc)
                vertical_scan_pass2_scan(target, region, offs)
                acc = offs[-1] + totals[-1]
        tail = region_len - aligned
        if tail:
            acc = horizontal_scan(target, Span(pos + aligned, tail), acc, w)
        pos += region_len
    return acc


def _fold(totals: np.ndarray, zero):
    acc = zero
    for t in totals:
        acc = acc + t
    return acc


# --- tree (two-sweep) family ----------------------------------------------

@njit(nogil=True, cache=True)
def _up_sweep(data, start, length):
    stride = 1
    while stride < length:
        step = stride * 2
        for i in range(start + step - 1, start + length, step):
            data[i] = data[i] + data[i - stride]
        stride = step
    return data[start + length - 1]


@njit(nogil=True, cache=True)
def _down_sweep(data, start, length):
    data[start + length - 1] = 0
    stride = length // 2
    while stride >= 1:
        step = stride * 2
        for i in range(start + step - 1, start + length, step):
            t = data[i - stride]
            data[i - stride] = data[i]
            data[i] = data[i] + t
        stride //= 2


@njit(nogil=True, cache=True)
def _add_back(data, scratch, start, length, offset):
    for i in range(length):
        data[start + i] = (data[start + i] + scratch[i]) + offset


def up_sweep(data: np.ndarray, span: Span):
    """Reduction sweep building the conceptual tree in place; returns the root."""
    span.check(data)
    _require_tree_length(span.len, 1)
    return _up_sweep(data, span.start, span.len)


def down_sweep(data: np.ndarray, span: Span) -> None:
    """Distribution sweep: turns an up-swept span into its exclusive scan."""
    span.check(data)
    _require_tree_length(span.len, 1)
    _down_sweep(data, span.start, span.len)


def _require_tree_length(length: int, w: int) -> None:
    if length < w or (length // w) * w != length or (length // w) & (length // w - 1):
        raise ValueError(f"tree span length {length} is not a power of two times {w}")


def tree_scan(data: np.ndarray, span: Span, offset=0, w: int = DEFAULT_LANE_WIDTH,
              scratch: np.ndarray | None = None):
    """Two-sweep (up/down) scan of one aligned block, in place.

    The span length must be a power of two times ``w``. The up-sweep
    combines strided pairs level by level, the down-sweep produces the
    exclusive scan, and a final pass adds back the original elements plus
    ``offset`` to recover the inclusive contract. Returns offset + span
    total in accumulator precision.
    """
    _check_width(w)
    span.check(data)
    _require_tree_length(span.len, w)
    acc = coerce_offset(offset, data.dtype)
    if scratch is None or scratch.shape[0] < span.len:
        scratch = np.empty(span.len, data.dtype)
    scratch[: span.len] = data[span.start:span.end]
    root = _up_sweep(data, span.start, span.len)
    _down_sweep(data, span.start, span.len)
    _add_back(data, scratch, span.start, span.len, acc)
    return acc + root


def tree_scan_auto(data: np.ndarray, span: Span, offset=0, w: int = DEFAULT_LANE_WIDTH,
                   block_len: int = 0, out: np.ndarray | None = None):
    """Tree scan over an arbitrary span.

    Regions of ``block_len`` (0 = whole span) are peeled into descending
    power-of-two-times-``w`` blocks fed to ``tree_scan``; what remains
    (< ``w`` elements) is finished by ``horizontal_scan``'s scalar tail.
    """
    _check_width(w)
    span.check(data)
    target = data
    if out is not None:
        span.check(out)
        out[span.start:span.end] = data[span.start:span.end]
        target = out
    acc = coerce_offset(offset, data.dtype)
    step = block_len if block_len > 0 else max(span.len, 1)
    scratch = np.empty(min(step, max(span.len, 1)), data.dtype)
    pos, end = span.start, span.end
    while pos < end:
        region_end = min(pos + step, end)
        while region_end - pos >= w:
            block = w << (((region_end - pos) // w).bit_length() - 1)
            acc = tree_scan(target, Span(pos, block), acc, w, scratch)
            pos += block
        tail = region_end - pos
        if tail:
            acc = horizontal_scan(target, Span(pos, tail), acc, w)
            pos = region_end
    return acc
