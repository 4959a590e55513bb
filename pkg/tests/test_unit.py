from __future__ import annotations

import pytest

from harness import HALF, MEM_BASE, chain, cpu_factory, dma_factory
from realmsim.realm.budget import RegionConfig
from realmsim.realm.isolation import Cause, Mode
from realmsim.realm.unit import RealmConfig, RealmConfigError
from realmsim.traffic import CpuWorkload, DmaWorkload, StallerManager, StallerWorkload


def cpu_latencies(realm: RealmConfig, n=20):
    wl = CpuWorkload(total_accesses=n, region_base=MEM_BASE, region_size=HALF, write_fraction=0.5, seed=3)
    c = chain(cpu_factory(wl), realm)
    c.world.run_until(lambda w: c.manager.done(), 10_000)
    return c.metrics.managers["cpu"].latencies


def test_unit_adds_exactly_one_cycle():
    assert set(cpu_latencies(RealmConfig(enabled=False))) == {8}
    assert set(cpu_latencies(RealmConfig())) == {9}


def dma(burst=256, max_bursts=None, **kw):
    return DmaWorkload(
        burst_len=burst, outstanding=2, read_base=MEM_BASE, read_size=HALF,
        write_base=MEM_BASE + HALF, write_size=HALF, max_bursts=max_bursts, **kw,
    )


def test_fragments_reach_memory_originals_complete_once():
    c = chain(dma_factory(dma(max_bursts=4)), RealmConfig(frag_len=16))
    c.memory.log_accepts = True
    c.world.run_until(lambda w: c.manager.done(), 20_000)
    lens = [r.len_beats for _, r in c.memory.accept_log]
    assert lens == [16] * 64
    assert len(c.manager.completions) == 4
    assert c.unit.fragments_emitted == 64
    assert not c.unit.reads and not c.unit.writes and c.unit.originals == 0


def test_budget_depletion_blocks_until_replenish():
    region = RegionConfig(MEM_BASE, MEM_BASE + 2 * HALF, 1024, 500)
    c = chain(dma_factory(dma()), RealmConfig(frag_len=8, regions=[region], max_outstanding=16))
    c.world.run(1600)
    c.unit.close(c.world.cycle)
    hist = c.unit.table.states[0].history
    assert len(hist) >= 3
    for rec in hist:
        assert 0 < rec.bytes_granted <= 1024 + 8 * 8
    causes = {cause for _, _, cause in c.unit.isolation_log}
    assert Cause.BUDGET in causes
    assert c.unit.budget_stall_cycles > 0


def test_user_isolation_stops_new_traffic_and_resumes():
    c = chain(dma_factory(dma(burst=16)), RealmConfig(frag_len=16))
    c.world.run(200)
    c.unit.request_isolation(True)
    c.world.run(200)
    assert c.unit.iso.mode == Mode.ISOLATED and c.unit.originals == 0
    done = len(c.manager.completions)
    c.world.run(100)
    assert len(c.manager.completions) == done
    c.unit.request_isolation(False)
    c.world.run(100)
    assert len(c.manager.completions) > done


def test_reconfigure_is_staged_while_busy_then_applied():
    c = chain(dma_factory(dma(burst=64, max_bursts=6)), RealmConfig(frag_len=64))
    c.world.run(20)
    assert c.unit.reconfigure(c.world.cycle, frag_len=8) is False
    c.world.run_until(lambda w: c.unit.cfg.frag_len == 8, 5_000)
    assert any(cause == Cause.RECONFIG for _, _, cause in c.unit.isolation_log)
    c.world.run_until(lambda w: c.manager.done(), 20_000)
    assert len(c.manager.completions) == 6
    with pytest.raises(RealmConfigError):
        c.unit.reconfigure(c.world.cycle, frag_len=0)


def staller_chain(depth):
    wl = StallerWorkload(addr=MEM_BASE, burst_len=16, w_delay=None)

    def make(link, metrics):
        metrics.add_manager("st", 2)
        return StallerManager("st", 2, link, wl, metrics)

    return chain(make, RealmConfig(frag_len=16, write_buffer_depth=depth))


def test_write_buffer_hides_withheld_write_address():
    c = staller_chain(16)
    c.memory.log_accepts = True
    c.world.run(200)
    assert c.manager.aw_accept_cycle is not None
    assert c.memory.accept_log == []
    c = staller_chain(0)
    c.memory.log_accepts = True
    c.world.run(200)
    assert len(c.memory.accept_log) == 1  # the memory's write path is now held


def test_buffer_must_hold_a_fragment():
    with pytest.raises(RealmConfigError):
        RealmConfig(frag_len=32, write_buffer_depth=16).validate()
    with pytest.raises(RealmConfigError):
        RealmConfig(frag_len=0).validate()
    with pytest.raises(RealmConfigError):
        RealmConfig(regions=[RegionConfig(0, 8, 1, 1)] * 3).validate()
