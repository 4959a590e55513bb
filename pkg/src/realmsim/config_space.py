"""Memory-mapped configuration registers of the regulation units, behind a
bus guard that grants exclusive access to one manager TID at a time.

Word map (32-bit registers, byte offsets)::

    0x000                GUARD
    0x100*(u+1) + 0x00   ENABLE          rw  bit 0
                + 0x04   FRAG_LEN        rw  beats, 1..256
                + 0x08   ISOLATE_REQ     rw  bit 0
                + 0x0C   ISOLATE_STATUS  ro  mode[1:0] | cause[5:4]
                + 0x10   THROTTLE        rw  bit 0
                + 0x14   CLEAR           wo  bit r clears region r latency counters
                + 0x20 + 0x20*r + 0x00   START_LO   rw
                                + 0x04   START_HI   rw
                                + 0x08   END_LO     rw  (exclusive)
                                + 0x0C   END_HI     rw
                                + 0x10   BUDGET     rw  bytes
                                + 0x14   PERIOD     rw  cycles
                                + 0x18   BYTES_COUNTER  ro  bytes granted this period
                                + 0x1C   LATENCY_AVG    ro  cycles

Writes to ENABLE, FRAG_LEN and the region registers are intrusive: they
go through :meth:`RealmUnit.reconfigure`, which isolates and drains the
unit before applying them.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

from .axi import AxiLink, BurstRequest, Resp
from .fabric import MemorySubordinate
from .realm.budget import BudgetConfigError, RegionConfig
from .realm.unit import RealmConfigError, RealmUnit

MASK32 = 0xFFFF_FFFF
UNCLAIMED = MASK32  # GUARD read value while nobody owns the space
GUARD = 0x000
UNIT_STRIDE = 0x100
REGION_BASE = 0x20
REGION_STRIDE = 0x20


class UnitReg(enum.IntEnum):
    ENABLE = 0x00
    FRAG_LEN = 0x04
    ISOLATE_REQ = 0x08
    ISOLATE_STATUS = 0x0C
    THROTTLE = 0x10
    CLEAR = 0x14


class RegionReg(enum.IntEnum):
    START_LO = 0x00
    START_HI = 0x04
    END_LO = 0x08
    END_HI = 0x0C
    BUDGET = 0x10
    PERIOD = 0x14
    BYTES_COUNTER = 0x18
    LATENCY_AVG = 0x1C


# Members of the two IntEnums compare equal by value (UnitReg.ISOLATE_STATUS ==
# RegionReg.END_HI), so membership is keyed by (enum type, member).
READ_ONLY = frozenset(
    (type(r), r) for r in (UnitReg.ISOLATE_STATUS, RegionReg.BYTES_COUNTER, RegionReg.LATENCY_AVG)
)


def is_read_only(reg: enum.IntEnum) -> bool:
    return (type(reg), reg) in READ_ONLY

_UNIT_DESCRIPTIONS = {
    UnitReg.ENABLE: ("rw", "bit 0: regulation enabled (cleared: bypass)"),
    UnitReg.FRAG_LEN: ("rw", "fragment length in beats, 1..256"),
    UnitReg.ISOLATE_REQ: ("rw", "bit 0: request isolation"),
    UnitReg.ISOLATE_STATUS: ("ro", "mode in [1:0] (0 connected, 1 isolating, 2 isolated), cause in [5:4]"),
    UnitReg.THROTTLE: ("rw", "bit 0: budget-proportional outstanding throttle"),
    UnitReg.CLEAR: ("wo", "bit r: clear latency/transaction counters of region r; reads 0"),
}
# IntEnum members compare equal across the two enums, so keep separate tables.
_REGION_DESCRIPTIONS = {
    RegionReg.START_LO: ("rw", "region start address [31:0]"),
    RegionReg.START_HI: ("rw", "region start address [63:32]"),
    RegionReg.END_LO: ("rw", "region end address (exclusive) [31:0]"),
    RegionReg.END_HI: ("rw", "region end address (exclusive) [63:32]"),
    RegionReg.BUDGET: ("rw", "bytes per period"),
    RegionReg.PERIOD: ("rw", "period length in cycles"),
    RegionReg.BYTES_COUNTER: ("ro", "bytes granted in the current period"),
    RegionReg.LATENCY_AVG: ("ro", "average completed-transaction latency in cycles"),
}


class GuardError(PermissionError):
    pass


@dataclass
class GuardState:
    owner: Optional[int] = None
    pinned: bool = False  # wired to a hardware root of trust at reset


class CfgResult(NamedTuple):
    resp: Resp
    value: int = 0

    @property
    def ok(self) -> bool:
        return self.resp == Resp.OKAY


@dataclass
class _RegionShadow:
    start: int = 0
    end: int = 0
    budget: int = 0
    period: int = 0

    def as_config(self) -> Optional[RegionConfig]:
        try:
            return RegionConfig(self.start, self.end, self.budget, self.period)
        except BudgetConfigError:
            return None


def handover(state: GuardState, caller: int, new_owner: int) -> GuardState:
    """Return the guard state after ``caller`` passes ownership on."""
    if state.owner is None or caller != state.owner:
        raise GuardError(f"TID {caller} does not own the configuration space")
    if state.pinned and new_owner != state.owner:
        raise GuardError("ownership is pinned to the hardware root of trust")
    return GuardState(new_owner, state.pinned)


class RegisterFile:
    """Register file for ``units``; ``now`` is advanced by the owning bus port."""

    def __init__(self, units: Sequence[RealmUnit], hwrot_tid: Optional[int] = None):
        self.units = list(units)
        self.guard = GuardState(hwrot_tid, hwrot_tid is not None)
        self.now = 0
        self.shadow: list[list[_RegionShadow]] = []
        for u in self.units:
            rows = []
            for r in range(u.cfg.num_regions):
                if r < len(u.cfg.regions):
                    c = u.cfg.regions[r]
                    rows.append(_RegionShadow(c.start_addr, c.end_addr, c.budget_bytes, c.period_cycles))
                else:
                    rows.append(_RegionShadow())
            self.shadow.append(rows)
        self.log: list[tuple[int, int, int, bool, int, Resp]] = []

    # ------------------------------------------------------------------

    def decode(self, offset: int) -> Optional[tuple]:
        """``("guard",)``, ``("unit", u, reg)``, ``("region", u, r, reg)`` or None."""
        if offset < 0 or offset % 4:
            return None
        if offset == GUARD:
            return ("guard",)
        u, rel = divmod(offset, UNIT_STRIDE)
        u -= 1
        if not 0 <= u < len(self.units):
            return None
        if rel < REGION_BASE:
            try:
                return ("unit", u, UnitReg(rel))
            except ValueError:
                return None
        r, rr = divmod(rel - REGION_BASE, REGION_STRIDE)
        if r >= len(self.shadow[u]):
            return None
        return ("region", u, r, RegionReg(rr))

    def cfg_access(self, tid: int, offset: int, is_write: bool, value: int = 0) -> CfgResult:
        res = self._access(tid, offset, is_write, value & MASK32)
        self.log.append((self.now, tid, offset, is_write, value, res.resp))
        return res

    def _access(self, tid: int, offset: int, is_write: bool, value: int) -> CfgResult:
        where = self.decode(offset)
        if where is None:
            return CfgResult(Resp.DECERR)
        g = self.guard
        if where[0] == "guard":
            if g.owner is None:
                if is_write:
                    if g.pinned:
                        return CfgResult(Resp.SLVERR)
                    self.guard = GuardState(tid, False)  # claim for the writer
                    return CfgResult(Resp.OKAY)
                return CfgResult(Resp.OKAY, UNCLAIMED)
            if tid != g.owner:
                return CfgResult(Resp.SLVERR)
            if is_write:
                try:
                    self.guard = handover(g, tid, value)
                except GuardError:
                    return CfgResult(Resp.SLVERR)
                return CfgResult(Resp.OKAY)
            return CfgResult(Resp.OKAY, g.owner)
        if g.owner is None or tid != g.owner:
            return CfgResult(Resp.SLVERR)
        reg = where[-1]
        if is_write and is_read_only(reg):
            return CfgResult(Resp.SLVERR)
        if where[0] == "unit":
            return self._unit(where[1], reg, is_write, value)
        return self._region(where[1], where[2], reg, is_write, value)

    def _unit(self, u: int, reg: UnitReg, is_write: bool, value: int) -> CfgResult:
        unit = self.units[u]
        cfg = dict(unit.cfg.__dict__)
        cfg.update(unit.staged)
        if not is_write:
            if reg == UnitReg.ENABLE:
                return CfgResult(Resp.OKAY, int(cfg["enabled"]))
            if reg == UnitReg.FRAG_LEN:
                return CfgResult(Resp.OKAY, cfg["frag_len"])
            if reg == UnitReg.ISOLATE_REQ:
                return CfgResult(Resp.OKAY, int(unit.user_isolate))
            if reg == UnitReg.ISOLATE_STATUS:
                return CfgResult(Resp.OKAY, unit.iso.status_word)
            if reg == UnitReg.THROTTLE:
                return CfgResult(Resp.OKAY, int(cfg["throttle_enabled"]))
            return CfgResult(Resp.OKAY, 0)  # CLEAR
        try:
            if reg == UnitReg.ENABLE:
                unit.reconfigure(self.now, enabled=bool(value & 1))
            elif reg == UnitReg.FRAG_LEN:
                unit.reconfigure(self.now, frag_len=value)
            elif reg == UnitReg.ISOLATE_REQ:
                unit.request_isolation(bool(value & 1))
            elif reg == UnitReg.THROTTLE:
                unit.set_throttle(bool(value & 1))
            elif reg == UnitReg.CLEAR:
                for r in range(len(self.shadow[u])):
                    slot = self._table_slot(u, r)
                    if value >> r & 1 and slot is not None and slot < len(unit.table.states):
                        st = unit.table.states[slot]
                        st.txn_count = 0
                        st.latency_accumulator = 0
        except (RealmConfigError, BudgetConfigError):
            return CfgResult(Resp.SLVERR)
        return CfgResult(Resp.OKAY)

    def _active_regions(self, u: int) -> list[tuple[int, RegionConfig]]:
        out = []
        for r, sh in enumerate(self.shadow[u]):
            c = sh.as_config()
            if c is not None:
                out.append((r, c))
        return out

    def _table_slot(self, u: int, r: int) -> Optional[int]:
        """Region-table index of register window ``r`` (None while incomplete)."""
        act = [w for w, _ in self._active_regions(u)]
        return act.index(r) if r in act else None

    def _region(self, u: int, r: int, reg: RegionReg, is_write: bool, value: int) -> CfgResult:
        unit = self.units[u]
        sh = self.shadow[u][r]
        if not is_write:
            if reg == RegionReg.START_LO:
                return CfgResult(Resp.OKAY, sh.start & MASK32)
            if reg == RegionReg.START_HI:
                return CfgResult(Resp.OKAY, sh.start >> 32)
            if reg == RegionReg.END_LO:
                return CfgResult(Resp.OKAY, sh.end & MASK32)
            if reg == RegionReg.END_HI:
                return CfgResult(Resp.OKAY, sh.end >> 32)
            if reg == RegionReg.BUDGET:
                return CfgResult(Resp.OKAY, sh.budget)
            if reg == RegionReg.PERIOD:
                return CfgResult(Resp.OKAY, sh.period)
            slot = self._table_slot(u, r)
            if slot is None or slot >= len(unit.table.states):
                return CfgResult(Resp.OKAY, 0)
            st = unit.table.states[slot]
            if reg == RegionReg.BYTES_COUNTER:
                return CfgResult(Resp.OKAY, st.bytes_granted_this_period & MASK32)
            return CfgResult(Resp.OKAY, (st.latency_avg or 0) & MASK32)
        new = _RegionShadow(sh.start, sh.end, sh.budget, sh.period)
        if reg == RegionReg.START_LO:
            new.start = (sh.start & ~MASK32) | value
        elif reg == RegionReg.START_HI:
            new.start = (sh.start & MASK32) | (value << 32)
        elif reg == RegionReg.END_LO:
            new.end = (sh.end & ~MASK32) | value
        elif reg == RegionReg.END_HI:
            new.end = (sh.end & MASK32) | (value << 32)
        elif reg == RegionReg.BUDGET:
            new.budget = value
        elif reg == RegionReg.PERIOD:
            new.period = value
        old = self.shadow[u][r]
        self.shadow[u][r] = new
        regions = [c for _, c in self._active_regions(u)]
        try:
            unit.reconfigure(self.now, regions=regions)
        except (RealmConfigError, BudgetConfigError):
            # overlapping or otherwise inconsistent set: keep the old value
            self.shadow[u][r] = old
            return CfgResult(Resp.SLVERR)
        return CfgResult(Resp.OKAY)


class ConfigSubordinate(MemorySubordinate):
    """Bus port of the register file: single-beat accesses only."""

    def __init__(self, name: str, link: AxiLink, start: int, end: int, regs: RegisterFile, latency: int = 8):
        super().__init__(name, link, start, end, latency)
        self.regs = regs

    def commit(self, cycle: int) -> None:
        self.regs.now = cycle + 1
        super().commit(cycle)

    def read_words(self, req: BurstRequest):
        if req.len_beats != 1:
            return Resp.SLVERR, None
        res = self.regs.cfg_access(req.manager_tid, req.addr - self.start, False)
        return res.resp, res.value

    def write_beat(self, req: BurstRequest, beat) -> Resp:
        if req.len_beats != 1:
            return Resp.SLVERR
        return self.regs.cfg_access(req.manager_tid, req.addr - self.start, True, beat.wdata or 0).resp


def register_map_markdown(num_units: int = 3, num_regions: int = 2) -> str:
    """The register map as a markdown table (offsets relative to the config base)."""
    lines = [
        "| Offset | Name | Access | Description |",
        "|--------|------|--------|-------------|",
        f"| 0x{GUARD:03X} | GUARD | rw | owner TID; write claims (unclaimed) or hands over (owner); "
        f"reads 0x{UNCLAIMED:08X} while unclaimed |",
    ]
    for u in range(num_units):
        base = UNIT_STRIDE * (u + 1)
        for reg in UnitReg:
            acc, desc = _UNIT_DESCRIPTIONS[reg]
            lines.append(f"| 0x{base + reg:03X} | U{u}.{reg.name} | {acc} | {desc} |")
        for r in range(num_regions):
            rb = base + REGION_BASE + REGION_STRIDE * r
            for reg in RegionReg:
                acc, desc = _REGION_DESCRIPTIONS[reg]
                lines.append(f"| 0x{rb + reg:03X} | U{u}.R{r}.{reg.name} | {acc} | {desc} |")
    return "\n".join(lines) + "\n"
