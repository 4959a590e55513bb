from __future__ import annotations

import pytest

from realmsim.traffic import (
    CpuState,
    CpuWorkload,
    DmaState,
    DmaWorkload,
    TraceEntry,
    TraceError,
    cpu_tick,
    dma_tick,
    parse_trace,
)


def test_cpu_blocks_and_thinks():
    st = CpuState(CpuWorkload(total_accesses=2, think_cycles=3, stride=8, region_base=0x1000))
    r = cpu_tick(st, 0)
    assert r is not None and r.addr == 0x1000 and r.issue_cycle == 0
    assert cpu_tick(st, 5) is None  # blocked
    assert cpu_tick(st, 10, completed_at=10) is None
    assert cpu_tick(st, 13) is None
    r2 = cpu_tick(st, 14)  # completion + 1 + think
    assert r2.addr == 0x1008
    st2 = CpuState(CpuWorkload(total_accesses=1))
    with pytest.raises(RuntimeError):
        cpu_tick(st2, 0, completed_at=0)


def test_cpu_random_addresses_are_seeded():
    def addrs(seed):
        st = CpuState(CpuWorkload(total_accesses=5, seed=seed))
        out = []
        for t in range(5):
            out.append(cpu_tick(st, 2 * t, completed_at=None if t == 0 else 2 * t - 1).addr)
        return out

    assert addrs(4) == addrs(4) != addrs(5)


def test_cpu_workload_validation():
    with pytest.raises(ValueError):
        CpuWorkload(write_fraction=1.5).validate()
    with pytest.raises(ValueError):
        CpuWorkload(think_cycles=-1).validate()


def test_dma_slots_alternate_direction():
    wl = DmaWorkload(burst_len=4, outstanding=2, read_base=0, read_size=64, write_base=0x1000, write_size=64)
    st = DmaState(wl)
    first = dma_tick(st, 0)
    assert [(s, r.is_write, r.addr) for s, r in first] == [(0, False, 0), (1, True, 0x1000)]
    assert dma_tick(st, 1) == []
    again = dma_tick(st, 5, completed_slots=[0])
    assert [(s, r.is_write, r.addr) for s, r in again] == [(0, True, 0x1020)]
    for t in range(3):
        dma_tick(st, 10 + t, completed_slots=[0, 1] if t == 0 else [])
    assert st.read_cursor < 64 and st.write_cursor < 64  # addresses wrap in their region


def test_dma_max_bursts_and_disable():
    wl = DmaWorkload(burst_len=2, outstanding=4, max_bursts=3)
    st = DmaState(wl)
    assert len(dma_tick(st, 0)) == 3
    st = DmaState(DmaWorkload(enabled=False))
    assert dma_tick(st, 0) == []
    with pytest.raises(ValueError):
        DmaWorkload(burst_len=3).validate()


def test_parse_trace():
    text = "# header\n0,R,0x100,4\n\n3,w,0x200,1,0xdead\n3,R,0x300,1\n"
    assert parse_trace(text) == [
        TraceEntry(0, False, 0x100, 4),
        TraceEntry(3, True, 0x200, 1, 0xDEAD),
        TraceEntry(3, False, 0x300, 1),
    ]


@pytest.mark.parametrize(
    "text,msg",
    [
        ("0,R,0x100\n", "4 or 5 fields"),
        ("0,X,0x100,1\n", "op must be"),
        ("5,R,0x100,1\n2,R,0x100,1\n", "backwards"),
        ("0,R,0x100,1,0x5\n", "no data"),
        ("a,R,0x100,1\n", "invalid literal"),
    ],
)
def test_parse_trace_errors(text, msg):
    with pytest.raises(TraceError, match=msg):
        parse_trace(text, "f.trace")
