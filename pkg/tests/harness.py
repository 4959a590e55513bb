"""Small worlds shared by several test modules."""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional

from realmsim.axi import AxiLink
from realmsim.fabric import MemorySubordinate
from realmsim.kernel import World
from realmsim.metrics import MetricsRecord
from realmsim.realm.budget import RegionConfig
from realmsim.realm.unit import RealmConfig, RealmUnit
from realmsim.traffic import CpuManager, CpuWorkload, DmaManager, DmaWorkload, Manager

MEM_BASE = 0x8000_0000
MEM_SIZE = 1 << 20
HALF = 1 << 16


@dataclass
class Chain:
    """One manager, one regulation unit and one memory, without a crossbar."""

    world: World
    manager: Manager
    unit: RealmUnit
    memory: MemorySubordinate
    metrics: MetricsRecord


def chain(manager_factory, realm: RealmConfig, latency: int = 8) -> Chain:
    m = MetricsRecord()
    up, down = AxiLink("up"), AxiLink("down")
    mgr = manager_factory(up, m)
    unit = RealmUnit("realm", up, down, realm)
    mem = MemorySubordinate("mem", down, MEM_BASE, MEM_BASE + MEM_SIZE, latency)
    w = World()
    for c in (mgr, unit, mem):
        w.add(c)
    return Chain(w, mgr, unit, mem, m)


def cpu_factory(wl: CpuWorkload, name: str = "cpu", tid: int = 0):
    def make(link, metrics):
        metrics.add_manager(name, tid)
        return CpuManager(name, tid, link, wl, metrics)

    return make


def dma_factory(wl: DmaWorkload, name: str = "dma", tid: int = 1):
    def make(link, metrics):
        metrics.add_manager(name, tid)
        return DmaManager(name, tid, link, wl, metrics)

    return make


@dataclass
class BudgetCase:
    frag: int
    burst: int
    regions: list[RegionConfig]
    cycles: int


def random_budget_case(rng: random.Random) -> BudgetCase:
    """Budgets 1 KiB..64 KiB and periods 100..1e5 cycles, both log-uniform;
    fragment lengths 1..256 with frag=1 over-represented."""
    frag = 1 if rng.random() < 0.2 else rng.randint(1, 256)
    burst = rng.choice([1, 16, 64, 128, 256])

    def region(base: int) -> RegionConfig:
        return RegionConfig(
            base,
            base + HALF,
            int(round(2 ** rng.uniform(10, 16))),
            int(round(10 ** rng.uniform(2, 5))),
        )

    regions = [region(MEM_BASE)]
    if rng.random() < 0.5:
        regions.append(region(MEM_BASE + HALF))
    shortest = min(r.period_cycles for r in regions)
    cycles = max(300, min(800, 2 * shortest + 64))
    return BudgetCase(frag, burst, regions, cycles)


def run_budget_case(case: BudgetCase) -> list[tuple[RegionConfig, int, int]]:
    """Saturating DMA through one regulated unit.

    Returns ``(region, bytes_granted, allowed_overshoot)`` for every
    recorded period, the final partial one included.
    """
    wl = DmaWorkload(
        burst_len=case.burst,
        outstanding=2,
        read_base=MEM_BASE,
        read_size=HALF,
        write_base=MEM_BASE + HALF,
        write_size=HALF,
    )
    c = chain(dma_factory(wl), RealmConfig(frag_len=case.frag, regions=list(case.regions), max_outstanding=16))
    c.world.run(case.cycles)
    c.unit.close(c.world.cycle)
    gran = min(case.frag, case.burst)  # DMA bursts are modifiable
    out = []
    for cfg, st in zip(c.unit.table.configs, c.unit.table.states):
        for rec in st.history:
            out.append((cfg, rec.bytes_granted, gran * wl.beat_bytes))
    return out


def first_period_bytes(unit: RealmUnit, region: int = 0) -> Optional[int]:
    h = unit.table.states[region].history
    return h[0].bytes_granted if h else None


def topology(latency: int = 8) -> dict:
    return {
        "latency": latency,
        "shared_path": True,
        "subordinates": [
            {"name": "cfg", "base": 0x0300_0000, "size": 0x1000, "kind": "config"},
            {"name": "spm", "base": 0x1000_0000, "size": 0x10_0000},
            {"name": "llc", "base": 0x8000_0000, "size": 0x1000_0000},
        ],
    }


def raw_config(managers: list[dict], **run) -> dict:
    return {"name": "t", "seed": 1, "topology": topology(), "managers": managers, "run": run or {"max_cycles": 200_000}}


# ----------------------------------------------------------------------
# bus-guard protocol model


def guard_units(n: int = 2):
    from realmsim.axi import AxiLink

    return [RealmUnit(f"u{i}", AxiLink(f"u{i}.up"), AxiLink(f"u{i}.dn"), RealmConfig()) for i in range(n)]


def random_guard_ops(rng: random.Random, length: int, tids=(0, 1, 2, 3)):
    """Claim / handover / non-owner / reconfiguration access mix."""
    from realmsim.config_space import GUARD, REGION_BASE, UNIT_STRIDE, RegionReg, UnitReg

    offsets = [UNIT_STRIDE + r for r in UnitReg] + [UNIT_STRIDE + REGION_BASE + r for r in RegionReg]
    offsets += [2 * UNIT_STRIDE + UnitReg.FRAG_LEN, 0x7F0, 0x102]  # second unit, unmapped, unaligned
    ops = []
    for _ in range(length):
        tid = rng.choice(tids)
        k = rng.random()
        if k < 0.35:
            ops.append((tid, GUARD, True, rng.choice(tids)))
        elif k < 0.45:
            ops.append((tid, GUARD, False, 0))
        else:
            off = rng.choice(offsets)
            val = rng.choice([0, 1, rng.randint(1, 256), rng.getrandbits(32)])
            ops.append((tid, off, rng.random() < 0.6, val))
    return ops


def check_guard_sequence(ops, hwrot_tid=None) -> None:
    """Replays ``ops`` against a register file and a reference ownership
    model; raises AssertionError on any divergence."""
    from realmsim.axi import Resp
    from realmsim.config_space import GUARD, UNCLAIMED, RegisterFile

    rf = RegisterFile(guard_units(), hwrot_tid)
    owner = hwrot_tid
    for tid, off, is_write, val in ops:
        res = rf.cfg_access(tid, off, is_write, val)
        if off == GUARD:
            if owner is None:
                if is_write and hwrot_tid is None:
                    assert res.resp == Resp.OKAY
                    owner = tid
                else:
                    assert res.value == UNCLAIMED or res.resp != Resp.OKAY
            elif tid != owner:
                assert res.resp == Resp.SLVERR, (tid, owner, res)
            elif is_write:
                if hwrot_tid is not None and val != owner:
                    assert res.resp == Resp.SLVERR
                else:
                    assert res.resp == Resp.OKAY
                    owner = val
            else:
                assert res == (Resp.OKAY, owner)
        elif owner is None or tid != owner:
            assert res.resp in (Resp.SLVERR, Resp.DECERR), (tid, owner, off, res)
        # exactly one owner once claimed, and it matches the reference
        assert rf.guard.owner == owner
        assert isinstance(owner, (int, type(None)))
