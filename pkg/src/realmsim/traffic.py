"""Manager models: blocking CPU, double-buffering DMA, W-withholding staller
and a trace replayer.

Every manager presents its requests on an :class:`AxiLink` and reports issue
and completion events to a shared :class:`MetricsRecord`.  A request is
*issued* in the cycle its address is first presented and *completed* in the
cycle its last read beat or its write response is handed back.
"""
from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

from .axi import AxiLink, BurstRequest, Resp, WriteBeat
from .kernel import Component
from .metrics import MetricsRecord


class TraceError(ValueError):
    pass


@dataclass
class _WriteData:
    req: BurstRequest
    sent: int = 0
    earliest: Optional[int] = 0  # first cycle a beat may be presented; None = withheld


class Manager(Component):
    """Shared queueing and completion plumbing for all traffic sources."""

    def __init__(self, name: str, tid: int, link: AxiLink, metrics: Optional[MetricsRecord] = None):
        self.name = name
        self.tid = tid
        self.link = link
        self.metrics = metrics
        self.ar_q: deque[BurstRequest] = deque()
        self.aw_q: deque[BurstRequest] = deque()
        self.w_q: deque[_WriteData] = deque()
        self.inflight: dict[int, BurstRequest] = {}
        self._next_txn = 0
        self._w_memo: tuple = (None, -1, None)
        self.completions: list[tuple[int, int]] = []  # (txn_id, cycle)
        self.errors: list[tuple[int, Resp]] = []
        self.read_data: dict[int, list[Optional[int]]] = {}

    def channels(self):
        return self.link.channels()

    # ------------------------------------------------------------------

    def new_txn_id(self) -> int:
        t = self._next_txn
        self._next_txn += 1
        return t

    def issue(self, req: BurstRequest, cycle: int, withhold_w: bool = False) -> None:
        """Queue ``req`` for presentation starting at ``cycle``.

        With ``withhold_w`` the write data is held back until a subclass
        sets the beat release cycle.
        """
        self.inflight[req.txn_id] = req
        if self.metrics is not None:
            self.metrics.record_issue(self.name, req.txn_id, cycle, req.nbytes)
        if req.is_write:
            self.aw_q.append(req)
            self.w_q.append(_WriteData(req, 0, None if withhold_w else cycle))
        else:
            self.ar_q.append(req)
            self.read_data[req.txn_id] = []

    @property
    def outstanding(self) -> int:
        return len(self.inflight)

    def on_complete(self, req: BurstRequest, cycle: int) -> None:
        """Hook for subclasses; called in the commit of the completing cycle."""

    def on_aw_accept(self, req: BurstRequest, cycle: int) -> None:
        pass

    def generate(self, cycle: int) -> None:
        """Hook: create new requests to be presented from ``cycle + 1`` on."""

    # ------------------------------------------------------------------

    def comb(self, cycle: int) -> None:
        ln = self.link
        ln.ar.drive(bool(self.ar_q), self.ar_q[0] if self.ar_q else None)
        ln.aw.drive(bool(self.aw_q), self.aw_q[0] if self.aw_q else None)
        wd = self.w_q[0] if self.w_q else None
        if wd is not None and wd.earliest is not None and wd.earliest <= cycle:
            if self._w_memo[0] is not wd or self._w_memo[1] != wd.sent:
                r = wd.req
                beat = WriteBeat(r.txn_id, wd.sent, wd.sent == r.len_beats - 1, r.manager_tid, r.wdata)
                self._w_memo = (wd, wd.sent, beat)
            ln.w.drive(True, self._w_memo[2])
        else:
            ln.w.drive(False)
        ln.r.accept(True)
        ln.b.accept(True)

    def commit(self, cycle: int) -> None:
        ln = self.link
        if ln.ar.fired:
            self.ar_q.popleft()
        if ln.aw.fired:
            req = self.aw_q.popleft()
            self.on_aw_accept(req, cycle)
        if ln.w.fired:
            wd = self.w_q[0]
            wd.sent += 1
            if wd.sent == wd.req.len_beats:
                self.w_q.popleft()
        if ln.r.fired:
            beat = ln.r.payload
            self.read_data[beat.txn_id].append(beat.rdata)
            if beat.status != Resp.OKAY and beat.last:
                self.errors.append((beat.txn_id, beat.status))
            if beat.last:
                self._finish(beat.txn_id, cycle)
        if ln.b.fired:
            resp = ln.b.payload
            if resp.status != Resp.OKAY:
                self.errors.append((resp.txn_id, resp.status))
            self._finish(resp.txn_id, cycle)
        self.generate(cycle)

    def _finish(self, txn_id: int, cycle: int) -> None:
        req = self.inflight.pop(txn_id)
        if self.metrics is not None:
            self.metrics.record_complete(self.name, txn_id, cycle)
        self.completions.append((txn_id, cycle))
        self.on_complete(req, cycle)

    def done(self) -> bool:
        return not self.inflight

    def pending(self) -> list[str]:
        out = []
        for t, r in self.inflight.items():
            kind = "W" if r.is_write else "R"
            out.append(f"{kind} txn {t} @{r.addr:#x} x{r.len_beats} issued {r.issue_cycle}")
        return out


# ----------------------------------------------------------------------
# CPU


@dataclass
class CpuWorkload:
    total_accesses: int = 1000
    think_cycles: int = 0
    write_fraction: float = 0.0
    region_base: int = 0
    region_size: int = 1 << 20
    stride: Optional[int] = None  # None: seeded random addresses
    seed: int = 1
    start_cycle: int = 0
    beat_bytes: int = 8

    def validate(self) -> None:
        if self.total_accesses < 0 or self.think_cycles < 0 or self.start_cycle < 0:
            raise ValueError("CPU workload counts must be non-negative")
        if not 0.0 <= self.write_fraction <= 1.0:
            raise ValueError("write_fraction must lie in [0, 1]")
        if self.region_size < self.beat_bytes:
            raise ValueError("CPU address region smaller than one access")


@dataclass
class CpuState:
    workload: CpuWorkload
    rng: random.Random = field(init=False)
    issued: int = 0
    next_issue: Optional[int] = None
    busy: bool = False

    def __post_init__(self) -> None:
        self.rng = random.Random(self.workload.seed)
        self.next_issue = self.workload.start_cycle

    @property
    def exhausted(self) -> bool:
        return self.issued >= self.workload.total_accesses


def cpu_address(state: CpuState) -> int:
    wl = state.workload
    slots = wl.region_size // wl.beat_bytes
    if wl.stride is None:
        k = state.rng.randrange(slots)
        return wl.region_base + k * wl.beat_bytes
    return wl.region_base + (state.issued * wl.stride) % (slots * wl.beat_bytes)


def cpu_tick(
    state: CpuState,
    now: int,
    completed_at: Optional[int] = None,
    *,
    txn_id: int = 0,
    tid: int = 0,
) -> Optional[BurstRequest]:
    """Advance the blocking CPU to cycle ``now``.

    ``completed_at`` reports that the outstanding access finished in that
    cycle; the next access is then due ``think_cycles`` cycles after the one
    following the completion.  Returns the request to present at ``now``.
    """
    wl = state.workload
    if completed_at is not None:
        if not state.busy:
            raise RuntimeError("completion reported for an idle CPU")
        state.busy = False
        state.next_issue = completed_at + 1 + wl.think_cycles
    if state.busy or state.exhausted or state.next_issue is None or now < state.next_issue:
        return None
    addr = cpu_address(state)
    is_write = wl.write_fraction > 0 and state.rng.random() < wl.write_fraction
    state.issued += 1
    state.busy = True
    state.next_issue = None
    return BurstRequest(
        txn_id, tid, addr, 1, wl.beat_bytes, is_write=is_write, issue_cycle=now
    )


class CpuManager(Manager):
    def __init__(self, name, tid, link, workload: CpuWorkload, metrics=None):
        super().__init__(name, tid, link, metrics)
        workload.validate()
        self.workload = workload
        self.state = CpuState(workload)
        self._completed_at: Optional[int] = None
        self.finish_cycle: Optional[int] = None
        self._tick(0)

    def _tick(self, now: int) -> None:
        req = cpu_tick(self.state, now, self._completed_at, txn_id=self._next_txn, tid=self.tid)
        self._completed_at = None
        if req is not None:
            self._next_txn += 1
            self.issue(req, now)

    def on_complete(self, req, cycle):
        self._completed_at = cycle
        if self.state.exhausted:
            self.finish_cycle = cycle

    def generate(self, cycle):
        if self._completed_at is not None or (not self.state.busy and self.state.next_issue is not None):
            self._tick(cycle + 1)

    def done(self) -> bool:
        return self.state.exhausted and not self.inflight


# ----------------------------------------------------------------------
# DMA


@dataclass
class DmaWorkload:
    burst_len: int = 256
    outstanding: int = 2
    read_base: int = 0
    read_size: int = 1 << 20
    write_base: int = 0
    write_size: int = 1 << 20
    beat_bytes: int = 8
    max_bursts: Optional[int] = None
    start_cycle: int = 0
    enabled: bool = True

    def validate(self) -> None:
        if not 1 <= self.burst_len <= 256:
            raise ValueError("DMA burst_len outside 1..256")
        if self.outstanding < 1:
            raise ValueError("DMA needs at least one outstanding burst")
        span = self.burst_len * self.beat_bytes
        if span & (span - 1):
            raise ValueError("DMA burst span must be a power of two bytes")
        if self.read_size < span or self.write_size < span:
            raise ValueError("DMA target region smaller than one burst")


@dataclass
class DmaState:
    workload: DmaWorkload
    # per slot: is the next burst of this slot a write?
    next_write: list[bool] = field(default_factory=list)
    busy: list[bool] = field(default_factory=list)
    issued: int = 0
    read_cursor: int = 0
    write_cursor: int = 0
    enabled: bool = True

    def __post_init__(self) -> None:
        n = self.workload.outstanding
        self.next_write = [bool(i % 2) for i in range(n)]
        self.busy = [False] * n
        self.enabled = self.workload.enabled

    @property
    def inflight(self) -> int:
        return sum(self.busy)


def dma_tick(
    state: DmaState,
    now: int,
    completed_slots: Iterable[int] = (),
    *,
    first_txn: int = 0,
    tid: int = 0,
) -> list[tuple[int, BurstRequest]]:
    """Refill free slots; returns ``(slot, request)`` pairs to present at ``now``.

    Each slot alternates between reading from the read region and writing
    to the write region.
    """
    wl = state.workload
    for s in completed_slots:
        state.busy[s] = False
        state.next_write[s] = not state.next_write[s]
    out = []
    if not state.enabled or now < wl.start_cycle:
        return out
    span = wl.burst_len * wl.beat_bytes
    for s in range(wl.outstanding):
        if state.busy[s]:
            continue
        if wl.max_bursts is not None and state.issued >= wl.max_bursts:
            break
        w = state.next_write[s]
        if w:
            addr = wl.write_base + state.write_cursor
            state.write_cursor = (state.write_cursor + span) % (wl.write_size - wl.write_size % span)
        else:
            addr = wl.read_base + state.read_cursor
            state.read_cursor = (state.read_cursor + span) % (wl.read_size - wl.read_size % span)
        req = BurstRequest(
            first_txn + len(out), tid, addr, wl.burst_len, wl.beat_bytes, is_write=w, issue_cycle=now
        )
        state.busy[s] = True
        state.issued += 1
        out.append((s, req))
    return out


class DmaManager(Manager):
    def __init__(self, name, tid, link, workload: DmaWorkload, metrics=None):
        super().__init__(name, tid, link, metrics)
        workload.validate()
        self.workload = workload
        self.state = DmaState(workload)
        self.slot_of: dict[int, int] = {}
        self._done_slots: list[int] = []
        self._tick(0)

    def _tick(self, now: int) -> None:
        for slot, req in dma_tick(
            self.state, now, self._done_slots, first_txn=self._next_txn, tid=self.tid
        ):
            self._next_txn += 1
            self.slot_of[req.txn_id] = slot
            self.issue(req, now)
        self._done_slots = []

    def set_enabled(self, on: bool) -> None:
        self.state.enabled = on

    def on_complete(self, req, cycle):
        self._done_slots.append(self.slot_of.pop(req.txn_id))

    def generate(self, cycle):
        self._tick(cycle + 1)


# ----------------------------------------------------------------------
# staller


@dataclass
class StallerWorkload:
    addr: int = 0
    burst_len: int = 16
    beat_bytes: int = 8
    w_delay: Optional[int] = None  # None: W beats are never sent
    aw_only: bool = True  # issue a single AW and nothing else
    start_cycle: int = 0


class StallerManager(Manager):
    """Presents one write address, then withholds the data beats."""

    def __init__(self, name, tid, link, workload: StallerWorkload, metrics=None):
        super().__init__(name, tid, link, metrics)
        self.workload = workload
        self.aw_accept_cycle: Optional[int] = None
        self.first_w_cycle: Optional[int] = None
        self._started = False
        if workload.start_cycle == 0:
            self._start(0)

    def _start(self, now: int) -> None:
        wl = self.workload
        req = BurstRequest(
            self.new_txn_id(), self.tid, wl.addr, wl.burst_len, wl.beat_bytes, is_write=True, issue_cycle=now
        )
        # w_delay 0 behaves as an ordinary writer presenting W alongside AW
        self.issue(req, now, withhold_w=wl.w_delay != 0)
        self._started = True

    def on_aw_accept(self, req, cycle):
        self.aw_accept_cycle = cycle
        d = self.workload.w_delay
        if d:
            for wd in self.w_q:
                if wd.req is req:
                    wd.earliest = cycle + d

    def commit(self, cycle):
        if self.link.w.fired and self.first_w_cycle is None:
            self.first_w_cycle = cycle
        super().commit(cycle)

    def generate(self, cycle):
        if not self._started and cycle + 1 >= self.workload.start_cycle:
            self._start(cycle + 1)
        elif not self.workload.aw_only and self._started and not self.inflight:
            self._started = False
            self._start(cycle + 1)


# ----------------------------------------------------------------------
# trace replay


@dataclass(frozen=True)
class TraceEntry:
    cycle: int
    is_write: bool
    addr: int
    len_beats: int
    data: Optional[int] = None


def parse_trace(text: str, source: str = "<trace>") -> list[TraceEntry]:
    """Parse ``cycle,op,addr_hex,len_beats[,data_hex]`` lines.

    Blank lines and lines starting with ``#`` are ignored; cycles must be
    non-decreasing.
    """
    out: list[TraceEntry] = []
    last = -1
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) not in (4, 5):
            raise TraceError(f"{source}:{n}: expected 4 or 5 fields, got {len(parts)}")
        try:
            cyc = int(parts[0])
            op = parts[1].upper()
            addr = int(parts[2], 16)
            ln = int(parts[3])
            data = int(parts[4], 16) if len(parts) == 5 else None
        except ValueError as e:
            raise TraceError(f"{source}:{n}: {e}") from None
        if op not in ("R", "W"):
            raise TraceError(f"{source}:{n}: op must be R or W, got {parts[1]!r}")
        if cyc < last:
            raise TraceError(f"{source}:{n}: cycle {cyc} goes backwards")
        if data is not None and op == "R":
            raise TraceError(f"{source}:{n}: read entries carry no data")
        last = cyc
        out.append(TraceEntry(cyc, op == "W", addr, ln, data))
    return out


def load_trace(path: Union[str, Path]) -> list[TraceEntry]:
    p = Path(path)
    return parse_trace(p.read_text(), str(p))


class TraceReplayer(Manager):
    """Issues each trace entry at its cycle (or as soon after as the
    outstanding limit allows)."""

    def __init__(self, name, tid, link, entries: list[TraceEntry], metrics=None,
                 max_outstanding: int = 8, beat_bytes: int = 8):
        super().__init__(name, tid, link, metrics)
        if max_outstanding < 1:
            raise ValueError("max_outstanding must be at least 1")
        self.entries = deque(entries)
        self.max_outstanding = max_outstanding
        self.beat_bytes = beat_bytes
        self.responses: dict[int, Resp] = {}
        self.txn_of_entry: list[int] = []
        self._feed(0)

    def _feed(self, now: int) -> None:
        while self.entries and self.entries[0].cycle <= now and self.outstanding < self.max_outstanding:
            e = self.entries.popleft()
            req = BurstRequest(
                self.new_txn_id(), self.tid, e.addr, e.len_beats, self.beat_bytes,
                is_write=e.is_write, issue_cycle=now, wdata=e.data,
            )
            self.txn_of_entry.append(req.txn_id)
            self.issue(req, now)

    def commit(self, cycle):
        ln = self.link
        if ln.r.fired and ln.r.payload.last:
            self.responses[ln.r.payload.txn_id] = ln.r.payload.status
        if ln.b.fired:
            self.responses[ln.b.payload.txn_id] = ln.b.payload.status
        super().commit(cycle)

    def generate(self, cycle):
        self._feed(cycle + 1)

    def done(self) -> bool:
        return not self.entries and not self.inflight
