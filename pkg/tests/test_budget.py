from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from realmsim.axi import BurstRequest
from realmsim.realm.budget import (
    BudgetConfigError,
    RegionConfig,
    RegionTable,
    mr_account,
    replenish,
    throttle_limit,
)


def req(addr=0x100, beats=4):
    return BurstRequest(0, 0, addr, beats, 8)


def test_region_validation():
    with pytest.raises(BudgetConfigError):
        RegionConfig(0x10, 0x10, 1, 1)
    with pytest.raises(BudgetConfigError):
        RegionConfig(0, 0x10, 0, 1)
    with pytest.raises(BudgetConfigError):
        RegionConfig(0, 0x10, 1, 0)
    with pytest.raises(BudgetConfigError):
        RegionTable([RegionConfig(0, 0x100, 1, 1), RegionConfig(0x80, 0x200, 1, 1)])


def test_unregulated_address_always_granted():
    t = RegionTable([RegionConfig(0x1000, 0x2000, 8, 10)])
    d = mr_account(t, req(0x100), 0)
    assert d.region is None and d.granted


def test_grant_while_budget_positive_then_block():
    t = RegionTable([RegionConfig(0, 0x1000, 40, 100)])
    assert mr_account(t, req(), 0).granted  # 32 bytes, 8 left
    assert mr_account(t, req(), 1).granted  # overshoot by 24 (< one fragment)
    assert t.states[0].remaining_budget == -24
    assert t.any_depleted()
    assert not mr_account(t, req(), 2).granted
    assert t.states[0].bytes_granted_this_period == 64


def test_replenish_restores_full_budget_without_carry_over():
    t = RegionTable([RegionConfig(0, 0x1000, 40, 100)], enable_cycle=5)
    mr_account(t, req(beats=8), 6)
    assert replenish(t, 104) == []
    assert replenish(t, 105) == [0]
    s = t.states[0]
    assert s.remaining_budget == 40 and s.period_index == 1 and s.period_start == 105
    assert [(p.index, p.start_cycle, p.cycles, p.bytes_granted) for p in s.history] == [(0, 5, 100, 64)]
    assert replenish(t, 105) == []  # idempotent within a cycle


def test_close_snapshots_partial_period():
    t = RegionTable([RegionConfig(0, 0x1000, 40, 100)])
    mr_account(t, req(), 3)
    t.close(50)
    assert t.states[0].history[-1].cycles == 50


def test_throttle_limit_examples():
    assert throttle_limit(0, 100, 8) == 0
    assert throttle_limit(100, 100, 8) == 8
    assert throttle_limit(1, 100, 8) == 1
    assert throttle_limit(50, 100, 8) == 4
    with pytest.raises(ValueError):
        throttle_limit(1, 0, 8)


@settings(max_examples=200, deadline=None)
@given(
    st.integers(1024, 65536),
    st.integers(1, 256),
    st.lists(st.integers(1, 256), min_size=1, max_size=200),
)
def test_accounting_overshoot_below_one_fragment(budget, frag, lens):
    t = RegionTable([RegionConfig(0, 1 << 20, budget, 10**9)])
    for n in lens:
        g = min(n, frag)
        mr_account(t, BurstRequest(0, 0, 0, g, 8), 0)
    assert t.states[0].bytes_granted_this_period <= budget + frag * 8
