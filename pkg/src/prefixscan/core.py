"""Sequential scalar building blocks: prefix sum, accumulate, increment.

These are the three sub-procedures every multithreaded scheme composes, plus
the exclusive-scan conversion. ``sequential_inclusive_scan`` doubles as the
reference oracle for every SIMD and multithreaded variant.

Two element types are supported: 32-bit unsigned integers with wraparound
addition (every variant is bit-exact regardless of association order) and
32-bit floats. Running totals are carried in a wider accumulator type
(uint64 / float64) while stored elements stay 32-bit; for floats this keeps
all reassociated variants within ~1 ulp of the sequential result instead of
letting rounding noise grow with the input length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

ELEMENT_DTYPES = {"i32": np.dtype(np.uint32), "f32": np.dtype(np.float32)}

_U32_MASK = 0xFFFFFFFF


def element_dtype(name: str) -> np.dtype:
    """Resolve an element-type label ("i32" or "f32") to a numpy dtype."""
    try:
        return ELEMENT_DTYPES[name]
    except KeyError:
        raise ValueError(f"unknown element type {name!r}; expected one of {sorted(ELEMENT_DTYPES)}") from None


def accumulator_zero(dtype) -> np.uint64 | np.float64:
    """Additive identity in the accumulator type for an element dtype."""
    return np.uint64(0) if np.dtype(dtype).kind in "iu" else np.float64(0.0)


def coerce_offset(offset, dtype) -> np.uint64 | np.float64:
    """Coerce a running-total seed to the accumulator type for ``dtype``.

    Kernels are compiled against uint64/float64 offsets only; passing a raw
    Python int or float through this keeps the compiled signatures stable.
    """
    if np.dtype(dtype).kind in "iu":
        return np.uint64(int(offset) & 0xFFFFFFFFFFFFFFFF)
    return np.float64(offset)


def wrap_element(total, dtype):
    """Reduce an accumulator-precision total to a single element value."""
    if np.dtype(dtype).kind in "iu":
        return np.uint32(int(total) & _U32_MASK)
    return np.float32(total)


@dataclass(frozen=True)
class Span:
    """A contiguous run of elements: ``start`` index plus ``len`` count.

    Zero-length spans are legal; every operation treats them as a no-op.
    """

    start: int
    len: int

    def __post_init__(self):
        if self.start < 0 or self.len < 0:
            raise ValueError(f"invalid span ({self.start}, {self.len})")

    @property
    def end(self) -> int:
        return self.start + self.len

    def check(self, data: np.ndarray) -> "Span":
        if self.end > data.shape[0]:
            raise ValueError(f"span [{self.start}, {self.end}) exceeds buffer of {data.shape[0]}")
        return self


def full_span(data: np.ndarray) -> Span:
    return Span(0, data.shape[0])


@njit(nogil=True, cache=True)
def _scan_kernel(src, dst, start, length, offset):
    acc = offset
    for i in range(start, start + length):
        acc = acc + src[i]
        dst[i] = acc
    return acc


@njit(nogil=True, cache=True)
def _accumulate_kernel(src, start, length, offset):
    acc = offset
    for i in range(start, start + length):
        acc = acc + src[i]
    return acc


@njit(nogil=True, cache=True)
def _increment_kernel(buf, start, length, delta):
    for i in range(start, start + length):
        buf[i] = buf[i] + delta


@njit(nogil=True, cache=True)
def _shift_right_kernel(buf, n, identity):
    last = buf[n - 1]
    for i in range(n - 1, 0, -1):
        buf[i] = buf[i - 1]
    buf[0] = identity
    return last


def sequential_inclusive_scan(data: np.ndarray, span: Span, offset=0):
    """Replace ``data[span]`` with running totals seeded by ``offset``.

    Returns the final running total (span total plus offset) in accumulator
    precision, so feeding it back as the next span's offset continues the
    scan exactly. This is the reference oracle for every other variant.
    """
    span.check(data)
    return _scan_kernel(data, data, span.start, span.len, coerce_offset(offset, data.dtype))


def sequential_accumulate(data: np.ndarray, span: Span):
    """Return the span's total without writing to the buffer."""
    span.check(data)
    return _accumulate_kernel(data, span.start, span.len, accumulator_zero(data.dtype))


def sequential_increment(data: np.ndarray, span: Span, offset) -> None:
    """Add ``offset`` to every element in the span."""
    span.check(data)
    _increment_kernel(data, span.start, span.len, coerce_offset(offset, data.dtype))


def exclusive_from_inclusive(data: np.ndarray, identity=0):
    """Convert an inclusive scan to an exclusive one in place.

    Shifts the buffer right by one, writes the identity at index 0, and
    returns the displaced last inclusive total (as an element value).
    Empty buffers are a no-op returning the identity.
    """
    ident = wrap_element(coerce_offset(identity, data.dtype), data.dtype)
    if data.shape[0] == 0:
        return ident
    return _shift_right_kernel(data, data.shape[0], ident)
