"""Monitoring & regulation bookkeeping: per-region byte budgets over periods."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

from ..axi import BurstRequest, bytes_of


class BudgetConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RegionConfig:
    start_addr: int
    end_addr: int  # exclusive
    budget_bytes: int
    period_cycles: int

    def __post_init__(self) -> None:
        if not 0 <= self.start_addr < self.end_addr:
            raise BudgetConfigError(
                f"region [{self.start_addr:#x}, {self.end_addr:#x}) is empty"
            )
        if self.budget_bytes <= 0:
            raise BudgetConfigError("budget_bytes must be positive")
        if self.period_cycles <= 0:
            raise BudgetConfigError("period_cycles must be positive")

    def contains(self, addr: int) -> bool:
        return self.start_addr <= addr < self.end_addr


@dataclass
class PeriodRecord:
    index: int
    start_cycle: int
    cycles: int
    bytes_granted: int
    grants: int


@dataclass
class RegionState:
    remaining_budget: int
    period_phase: int = 0
    bytes_granted_this_period: int = 0
    grants_this_period: int = 0
    txn_count: int = 0
    latency_accumulator: int = 0
    period_index: int = 0
    period_start: int = 0
    history: list[PeriodRecord] = field(default_factory=list)

    @property
    def latency_avg(self) -> Optional[int]:
        if not self.txn_count:
            return None
        return self.latency_accumulator // self.txn_count


class AccountDecision(NamedTuple):
    region: Optional[int]  # None: address matched no region (unregulated)
    granted: bool


class RegionTable:
    """Region configurations plus their runtime counters for one unit."""

    def __init__(self, regions: Sequence[RegionConfig] = (), enable_cycle: int = 0):
        self.configs: list[RegionConfig] = []
        self.states: list[RegionState] = []
        self.enable_cycle = enable_cycle
        self.configure(regions, enable_cycle)

    def configure(self, regions: Sequence[RegionConfig], enable_cycle: int) -> None:
        ordered = sorted(regions, key=lambda r: r.start_addr)
        for a, b in zip(ordered, ordered[1:]):
            if b.start_addr < a.end_addr:
                raise BudgetConfigError(
                    f"regions [{a.start_addr:#x},{a.end_addr:#x}) and "
                    f"[{b.start_addr:#x},{b.end_addr:#x}) overlap"
                )
        self.configs = list(regions)
        self.enable_cycle = enable_cycle
        self.states = [
            RegionState(remaining_budget=r.budget_bytes, period_start=enable_cycle)
            for r in self.configs
        ]

    def __len__(self) -> int:
        return len(self.configs)

    def lookup(self, addr: int) -> Optional[int]:
        for i, r in enumerate(self.configs):
            if r.contains(addr):
                return i
        return None

    def any_depleted(self) -> bool:
        for s in self.states:
            if s.remaining_budget <= 0:
                return True
        return False

    def close(self, now: int) -> None:
        """Snapshot every region's partial current period (end of simulation)."""
        for s in self.states:
            if now > s.period_start:
                s.history.append(
                    PeriodRecord(
                        s.period_index,
                        s.period_start,
                        now - s.period_start,
                        s.bytes_granted_this_period,
                        s.grants_this_period,
                    )
                )


def mr_account(table: RegionTable, req: BurstRequest, now: int) -> AccountDecision:
    """Charge ``req`` against its region; grant iff budget remains."""
    idx = table.lookup(req.addr)
    if idx is None:
        return AccountDecision(None, True)
    st = table.states[idx]
    if st.remaining_budget <= 0:
        return AccountDecision(idx, False)
    n = bytes_of(req)
    st.remaining_budget -= n
    st.bytes_granted_this_period += n
    st.grants_this_period += 1
    return AccountDecision(idx, True)


def replenish(table: RegionTable, now: int) -> list[int]:
    """Advance period phases to cycle ``now``; returns regions that wrapped.

    A wrapped region gets its full budget back; debt is not carried over.
    """
    wrapped = []
    for i, (cfg, st) in enumerate(zip(table.configs, table.states)):
        elapsed = now - table.enable_cycle
        if elapsed < 0:
            continue
        st.period_phase = elapsed % cfg.period_cycles
        if st.period_phase == 0 and elapsed > 0 and now != st.period_start:
            st.history.append(
                PeriodRecord(
                    st.period_index,
                    st.period_start,
                    now - st.period_start,
                    st.bytes_granted_this_period,
                    st.grants_this_period,
                )
            )
            st.period_index += 1
            st.period_start = now
            st.remaining_budget = cfg.budget_bytes
            st.bytes_granted_this_period = 0
            st.grants_this_period = 0
            wrapped.append(i)
    return wrapped


def throttle_limit(remaining: int, total: int, max_outstanding: int) -> int:
    """Outstanding transactions allowed at the given remaining budget."""
    if total <= 0:
        raise ValueError("total budget must be positive")
    if remaining <= 0:
        return 0
    r = min(remaining, total)
    return max(1, -(-max_outstanding * r // total))
