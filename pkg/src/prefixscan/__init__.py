"""Parallel prefix sums: sequential, SIMD-style and multithreaded variants."""

from .core import (
    Span,
    exclusive_from_inclusive,
    full_span,
    sequential_accumulate,
    sequential_inclusive_scan,
    sequential_increment,
    wrap_element,
)
from .engine import ReusableBarrier, ScanEngine, ScanRequest, execute
from .plan import (
    CacheInfo,
    Dilation,
    SchemeId,
    compute_grid,
    compute_layout,
    default_block_len,
    detect_cache_info,
)
from .simd import (
    horizontal_scan,
    lane_shift_with_zero_fill,
    tree_scan,
    tree_scan_auto,
    vector_inclusive_scan,
    vertical_scan,
)

__version__ = "0.1.0"

__all__ = [
    "Span", "full_span", "sequential_inclusive_scan", "sequential_accumulate",
    "sequential_increment", "exclusive_from_inclusive", "wrap_element",
    "lane_shift_with_zero_fill", "vector_inclusive_scan", "horizontal_scan",
    "vertical_scan", "tree_scan", "tree_scan_auto",
    "SchemeId", "Dilation", "compute_layout", "compute_grid",
    "default_block_len", "detect_cache_info", "CacheInfo",
    "ScanEngine", "ScanRequest", "ReusableBarrier", "execute",
    "__version__",
]
