"""Layout arithmetic: coverage, alignment, dilation, grids, cache defaults."""

import numpy as np
import pytest

from prefixscan.plan import (
    CacheInfo,
    DEFAULT_BLOCK_ELEMENTS,
    Dilation,
    L2_ELEMS_ENV,
    Role,
    SchemeId,
    compute_grid,
    compute_layout,
    default_block_len,
    detect_cache_info,
)

ALL_SCHEMES = list(SchemeId)
EQUAL = (SchemeId.SCAN_INCREMENT_EQUAL, SchemeId.ACCUMULATE_SCAN_EQUAL)
PLUS_ONE = (SchemeId.SCAN_INCREMENT_PLUS_ONE, SchemeId.ACCUMULATE_SCAN_PLUS_ONE)


def lengths(layout):
    return [s.len for s in layout.spans]


def test_equal_partitions_simple():
    for scheme in EQUAL:
        layout = compute_layout(100, 4, scheme, lane_width=1)
        assert lengths(layout) == [25, 25, 25, 25]


def test_plus_one_equal_dilation():
    for scheme in PLUS_ONE:
        layout = compute_layout(100, 4, scheme, Dilation(1.0, 1.0), lane_width=1)
        assert lengths(layout) == [20, 20, 20, 20, 20], scheme


def test_plus_one_half_dilation_coverage_and_ratio():
    # base solves 4b + 0.5b = 100; coverage stays exact, ratio close to 0.5
    layout = compute_layout(100, 4, SchemeId.SCAN_INCREMENT_PLUS_ONE,
                            Dilation(d0=0.5), lane_width=1)
    assert layout.coverage() == 100
    base = layout.spans[0].len
    dilated = layout.spans[-1].len
    assert abs(dilated / base - 0.5) < 0.1

    layout = compute_layout(100, 4, SchemeId.ACCUMULATE_SCAN_PLUS_ONE,
                            Dilation(d0=0.5, d_last=1.0), lane_width=1)
    assert layout.coverage() == 100
    assert abs(layout.spans[0].len / layout.spans[1].len - 0.5) < 0.1


def test_exact_cover_randomized_sweep():
    rng = np.random.default_rng(31)
    for _ in range(300):
        n = int(rng.integers(0, 200000))
        m = int(rng.integers(1, 9))
        w = int(rng.choice([1, 4, 8, 16]))
        scheme = ALL_SCHEMES[int(rng.integers(0, 4))]
        dil = Dilation(float(rng.random()), float(rng.random()))
        layout = compute_layout(n, m, scheme, dil, w)
        spans = layout.spans
        assert layout.coverage() == n
        pos = 0
        for s in spans:
            assert s.start == pos and s.len >= 0
            pos += s.len
        # every non-final span is lane aligned
        for s in spans[:-1]:
            assert s.len % w == 0, (n, m, w, scheme)


def test_dilation_zero_collapses_to_equal_scheme():
    for plus, equal in ((SchemeId.SCAN_INCREMENT_PLUS_ONE, SchemeId.SCAN_INCREMENT_EQUAL),
                        (SchemeId.ACCUMULATE_SCAN_PLUS_ONE, SchemeId.ACCUMULATE_SCAN_EQUAL)):
        collapsed = compute_layout(1003, 4, plus, Dilation(d0=0.0), lane_width=8)
        reference = compute_layout(1003, 4, equal, lane_width=8)
        assert collapsed == reference


def test_roles_scan_increment_equal():
    layout = compute_layout(4000, 4, SchemeId.SCAN_INCREMENT_EQUAL, lane_width=16)
    assert [it.role for it in layout.pass1] == [Role.SCAN] * 4
    assert layout.pass1[0].seeded and not any(it.seeded for it in layout.pass1[1:])
    assert [it.role for it in layout.pass2] == [Role.INCREMENT] * 3
    assert layout.idle_threads(layout.pass2) == {0}
    assert layout.idle_threads(layout.pass1) == set()


def test_roles_accumulate_scan_equal():
    layout = compute_layout(4000, 4, SchemeId.ACCUMULATE_SCAN_EQUAL, lane_width=16)
    assert [it.role for it in layout.pass1] == [Role.ACCUMULATE] * 3
    assert layout.idle_threads(layout.pass1) == {3}
    assert [it.role for it in layout.pass2] == [Role.SCAN] * 4
    # partitioned iterations also need the last partition's total
    chained = compute_layout(4000, 4, SchemeId.ACCUMULATE_SCAN_EQUAL, lane_width=16,
                             need_last_total=True)
    assert len(chained.pass1) == 4 and chained.idle_threads(chained.pass1) == set()


def test_roles_plus_one_schemes_have_no_idle_thread():
    for scheme in PLUS_ONE:
        layout = compute_layout(4000, 4, scheme, Dilation(0.5, 0.5), lane_width=16)
        assert len(layout.spans) == 5
        assert layout.idle_threads(layout.pass1) == set()
        assert layout.idle_threads(layout.pass2) == set()
        # thread 0 owns the last partition in pass 2
        last_scan = [it for it in layout.pass2 if it.role is Role.SCAN][-1]
        assert last_scan.thread == 0 and last_scan.span_index == 4


def test_roles_accumulate_scan_plus_one_pass1():
    layout = compute_layout(4000, 4, SchemeId.ACCUMULATE_SCAN_PLUS_ONE, lane_width=16)
    roles = {it.thread: it.role for it in layout.pass1}
    assert roles[0] is Role.SCAN and layout.pass1[0].seeded
    assert all(roles[t] is Role.ACCUMULATE for t in (1, 2, 3))


def test_degenerate_input_single_thread_layout():
    layout = compute_layout(30, 4, SchemeId.SCAN_INCREMENT_EQUAL, lane_width=16)
    assert len(layout.spans) == 1 and layout.spans[0].len == 30
    assert len(layout.pass1) == 1 and layout.pass1[0].role is Role.SCAN


def test_determinism():
    a = compute_layout(99991, 7, SchemeId.ACCUMULATE_SCAN_PLUS_ONE, Dilation(0.3, 0.8), 16)
    b = compute_layout(99991, 7, SchemeId.ACCUMULATE_SCAN_PLUS_ONE, Dilation(0.3, 0.8), 16)
    assert a == b


def test_dilation_validation():
    with pytest.raises(ValueError):
        Dilation(d0=1.5)
    with pytest.raises(ValueError):
        Dilation(d_last=-0.1)


def test_grid_iteration_count():
    m, block = 4, 1000
    grid = compute_grid(4 * block * m, m, SchemeId.SCAN_INCREMENT_EQUAL, block_len=block)
    assert grid.iterations == 4
    assert all(r.len == block * m for r in grid.regions)

    tiny = compute_grid(1, 4, SchemeId.SCAN_INCREMENT_EQUAL, block_len=block)
    assert tiny.iterations == 1
    assert tiny.layouts[0].spans[0].len == 1


def test_grid_zero_block_is_single_iteration():
    grid = compute_grid(10**6, 4, SchemeId.SCAN_INCREMENT_EQUAL, block_len=0)
    assert grid.iterations == 1


def test_grid_exact_cover_randomized():
    rng = np.random.default_rng(17)
    for _ in range(200):
        n = int(rng.integers(0, 500000))
        m = int(rng.integers(1, 9))
        block = int(rng.choice([0, 64, 1000, 8192]))
        scheme = ALL_SCHEMES[int(rng.integers(0, 4))]
        grid = compute_grid(n, m, scheme, Dilation(), block, 16)
        pos = 0
        for region, layout in zip(grid.regions, grid.layouts):
            assert region.start == pos
            assert layout.coverage() == region.len
            assert layout.spans[0].start == region.start
            pos += region.len
        assert pos == n or (n == 0 and pos == 0)


def test_grid_last_iteration_keeps_idle_slot():
    grid = compute_grid(64000, 4, SchemeId.ACCUMULATE_SCAN_EQUAL, block_len=4000, lane_width=16)
    assert grid.iterations == 4
    for layout in grid.layouts[:-1]:
        assert len(layout.pass1) == 4  # chained carry needs every local total
    assert len(grid.layouts[-1].pass1) == 3


def test_default_block_len_from_l2():
    mb = 1024 * 1024
    assert default_block_len(CacheInfo(l2_bytes=mb), threads_per_core=1) == 131072
    assert default_block_len(CacheInfo(l2_bytes=mb), threads_per_core=2) == 65536
    assert default_block_len(CacheInfo(l2_bytes=None)) == DEFAULT_BLOCK_ELEMENTS
    # 1000 bytes -> 125 elements, aligned down to the lane width
    assert default_block_len(CacheInfo(l2_bytes=1000), threads_per_core=1, lane_width=16) == 112
    assert default_block_len(CacheInfo(l2_bytes=64), threads_per_core=4, lane_width=16) == 16


def test_detect_cache_info_env_override(monkeypatch):
    monkeypatch.setenv(L2_ELEMS_ENV, "262144")
    info = detect_cache_info()
    assert info.l2_bytes == 262144 * 4
    assert default_block_len(info, threads_per_core=1) == 131072


def test_detect_cache_info_runs():
    info = detect_cache_info()
    assert info.threads_per_core >= 1
