"""Shared fixtures and independent reference implementations.

The reference scans here are written against numpy/pure Python only, so
they stay independent of the library's compiled kernels.
"""

import numpy as np
import pytest

U32_MASK = 0xFFFFFFFF


def make_data(elem_type: str, n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    if elem_type == "i32":
        return rng.integers(0, 1 << 32, n, dtype=np.uint32)
    return rng.random(n, dtype=np.float32)


def reference_scan(data: np.ndarray) -> np.ndarray:
    """Independent oracle: wrapping uint32 cumsum, or float64-carried cumsum."""
    if data.dtype == np.uint32:
        return np.cumsum(data, dtype=np.uint32)
    return np.cumsum(data.astype(np.float64)).astype(np.float32)


def naive_scan_loop(values, offset=0):
    """Second, separately written naive loop (pure Python, exact integers)."""
    out = []
    acc = int(offset)
    for v in values:
        acc = (acc + int(v)) & U32_MASK
        out.append(acc)
    return out


def reference_total(data: np.ndarray):
    if data.dtype == np.uint32:
        return int(data.astype(np.uint64).sum()) & U32_MASK
    return float(np.sum(data.astype(np.float64)))


def assert_scan_matches(got: np.ndarray, expected: np.ndarray, rtol: float = 1e-5,
                        context=""):
    """Bit-exact for integers, elementwise relative tolerance for floats."""
    if got.dtype.kind in "iu":
        assert np.array_equal(got, expected), f"integer mismatch {context}"
        return
    if got.shape[0] == 0:
        return
    e = expected.astype(np.float64)
    rel = np.abs(got.astype(np.float64) - e) / np.maximum(np.abs(e), 1e-30)
    assert rel.max() <= rtol, f"float off by {rel.max():.3e} {context}"


@pytest.fixture(scope="session")
def warm_kernels():
    """Touch every compiled kernel once so tests time algorithms, not the JIT."""
    from prefixscan import bench

    for elem in ("i32", "f32"):
        for algo in bench.ALGORITHMS:
            threads = 2 if algo in bench.MULTI_THREAD_ALGOS else 1
            cfg = bench.CaseConfig(algo=algo, elem_type=elem, n=256, threads=threads,
                                   block_len=64, seed=1, reps=5)
            bench.run_case(cfg)
    return True
