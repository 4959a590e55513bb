"""The regulation unit placed between one manager and the crossbar.

Request path (AR/AW/W) passes through exactly one registered stage:
ingress handshake, split into fragments, budget check at emission,
then a one-entry output register per address channel.  Responses (R/B)
return combinationally with ``r.last`` gated and write responses
coalesced per original burst.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

from ..axi import MAX_BURST_BEATS, AxiLink, BurstRequest, ReadBeat, WriteBeat, WriteResponse
from ..kernel import Component
from .budget import RegionConfig, RegionTable, mr_account, replenish, throttle_limit
from .isolation import Cause, IsolationState, Mode, isolation_tick
from .splitter import (
    LineageError,
    coalesce_write_responses,
    effective_granularity,
    gate_read_last,
    split_burst,
)
from .write_buffer import StagedBeat, WriteBuffer

META_SLOTS = 2  # original bursts held in the splitter per direction
CUT_THROUGH_DEPTH = 2
MIN_BUFFER_DEPTH = 16  # an unsplittable non-modifiable burst must fit


class RealmConfigError(ValueError):
    pass


@dataclass
class RealmConfig:
    enabled: bool = True
    frag_len: int = MAX_BURST_BEATS
    regions: list[RegionConfig] = field(default_factory=list)
    throttle_enabled: bool = False
    max_outstanding: int = 8
    write_buffer_depth: int = 0  # beats; 0 means no write buffer
    num_regions: int = 2

    def validate(self) -> None:
        if not 1 <= self.frag_len <= MAX_BURST_BEATS:
            raise RealmConfigError(f"frag_len {self.frag_len} outside 1..{MAX_BURST_BEATS}")
        if self.max_outstanding < 1:
            raise RealmConfigError("max_outstanding must be at least 1")
        if self.write_buffer_depth:
            if self.write_buffer_depth < max(self.frag_len, MIN_BUFFER_DEPTH):
                raise RealmConfigError(
                    f"write buffer of {self.write_buffer_depth} beats cannot hold "
                    f"a {max(self.frag_len, MIN_BUFFER_DEPTH)}-beat fragment"
                )
        if len(self.regions) > self.num_regions:
            raise RealmConfigError(
                f"{len(self.regions)} regions configured, unit has {self.num_regions}"
            )
        RegionTable(self.regions)  # overlap check


class _Txn:
    __slots__ = ("req", "accept_cycle", "frags", "next_frag", "gran", "w_received", "b_resps")

    def __init__(self, req: BurstRequest, cycle: int, frag_len: int):
        self.req = req
        self.accept_cycle = cycle
        self.frags = split_burst(req, frag_len)
        self.gran = effective_granularity(req, frag_len)
        self.next_frag = 0
        self.w_received = 0
        self.b_resps: list[WriteResponse] = []


class RealmUnit(Component):
    def __init__(
        self,
        name: str,
        up: AxiLink,
        down: AxiLink,
        cfg: RealmConfig,
        enable_cycle: int = 0,
    ):
        cfg.validate()
        self.name = name
        self.up = up
        self.down = down
        self.cfg = cfg
        self.table = RegionTable(cfg.regions, enable_cycle)
        self.iso = IsolationState()
        self.user_isolate = False
        self.staged: dict = {}
        self.split_r: deque[_Txn] = deque()
        self.split_w: deque[_Txn] = deque()
        self.w_expect: deque[_Txn] = deque()
        self.reads: dict[int, _Txn] = {}
        self.writes: dict[int, _Txn] = {}
        self.ar_reg: Optional[BurstRequest] = None
        self.aw_reg: Optional[BurstRequest] = None
        self.wbuf = self._make_wbuf()
        self.out_frags = 0
        self.originals = 0
        self._prio_write = False
        self._memo_r: tuple = (None, None)
        self._memo_b: tuple = (None, None)
        self._memo_w: tuple = (None, None)
        # statistics
        self.fragments_emitted = 0
        self.budget_stall_cycles = 0
        self.wbuf_delay_total = 0
        self.wbuf_released = 0
        self.isolation_log: list[tuple[int, Mode, Cause]] = []

    def _make_wbuf(self) -> WriteBuffer:
        d = self.cfg.write_buffer_depth
        return WriteBuffer(d, True) if d else WriteBuffer(CUT_THROUGH_DEPTH, False)

    def channels(self):
        return self.up.channels() + self.down.channels()

    # ------------------------------------------------------------------
    # runtime control (driven by the configuration space)

    def request_isolation(self, on: bool) -> None:
        self.user_isolate = bool(on)

    def set_throttle(self, on: bool) -> None:
        """Throttling is not intrusive and takes effect immediately."""
        self.cfg = replace(self.cfg, throttle_enabled=bool(on))

    def reconfigure(self, now: int, **changes) -> bool:
        """Apply intrusive changes, isolating first if traffic may be in flight.

        Accepted keys: ``enabled``, ``frag_len``, ``regions``, ``throttle_enabled``.
        Returns True if applied immediately, False if staged.
        """
        trial = replace(self.cfg, **{k: v for k, v in changes.items() if k != "regions"})
        if "regions" in changes:
            trial.regions = list(changes["regions"])
        trial.validate()
        if self._drained():
            self._apply(now, changes)
            return True
        self.staged.update(changes)
        return False

    def _drained(self) -> bool:
        return self.originals == 0 and self.out_frags == 0

    def _apply(self, now: int, changes: dict) -> None:
        regions = changes.get("regions")
        self.cfg = replace(self.cfg, **{k: v for k, v in changes.items() if k != "regions"})
        if regions is not None:
            self.cfg.regions = list(regions)
            history = [s.history for s in self.table.states]
            self.table.close(now)
            self.table.configure(self.cfg.regions, now)
            for st, h in zip(self.table.states, history):
                st.history = h
        if "write_buffer_depth" in changes:
            self.wbuf = self._make_wbuf()

    # ------------------------------------------------------------------

    def comb(self, cycle: int) -> None:
        up, down = self.up, self.down
        if not self.cfg.enabled:
            for src, dst in ((up.ar, down.ar), (up.aw, down.aw), (up.w, down.w)):
                dst.drive(src.valid, src.payload)
                src.accept(dst.ready)
            for src, dst in ((down.r, up.r), (down.b, up.b)):
                dst.drive(src.valid, src.payload)
                src.accept(dst.ready)
            return

        block = self.iso.blocks_new
        up.ar.accept(not block and len(self.split_r) < META_SLOTS)
        up.aw.accept(not block and len(self.split_w) < META_SLOTS)
        expecting = bool(self.w_expect) or (up.aw.valid and up.aw.ready)
        up.w.accept(expecting and self.wbuf.accepts_w())

        down.ar.drive(self.ar_reg is not None, self.ar_reg)
        down.aw.drive(self.aw_reg is not None, self.aw_reg)
        hb = self.wbuf.w_head()
        if hb is None:
            down.w.drive(False)
        else:
            if self._memo_w[0] is not hb:
                wb = WriteBeat(hb.txn_id, hb.beat_index, hb.last, hb.manager_tid, hb.wdata)
                self._memo_w = (hb, wb)
            down.w.drive(True, self._memo_w[1])

        if down.r.valid:
            rb = down.r.payload
            if self._memo_r[0] is not rb:
                tr = self.reads.get(rb.txn_id)
                if tr is None:
                    raise LineageError(f"{self.name}: read beat for unknown txn {rb.txn_id}")
                pos = rb.frag_offset + rb.beat_index
                self._memo_r = (rb, gate_read_last(rb, tr.req.len_beats, pos))
            up.r.drive(True, self._memo_r[1])
        else:
            up.r.drive(False)
        down.r.accept(up.r.ready)

        if down.b.valid:
            bb = down.b.payload
            tr = self.writes.get(bb.txn_id)
            if tr is None:
                raise LineageError(f"{self.name}: write response for unknown txn {bb.txn_id}")
            if len(tr.b_resps) == len(tr.frags) - 1:
                if self._memo_b[0] is not bb:
                    self._memo_b = (bb, coalesce_write_responses(tr.b_resps + [bb]))
                up.b.drive(True, self._memo_b[1])
                down.b.accept(up.b.ready)
            else:
                up.b.drive(False)
                down.b.accept(True)
        else:
            up.b.drive(False)
            down.b.accept(up.b.ready)

    def commit(self, cycle: int) -> None:
        up, down = self.up, self.down
        if not self.cfg.enabled:
            self._commit_bypass(cycle)
            return
        now = cycle + 1

        if down.ar.fired:
            self.ar_reg = None
        if down.aw.fired:
            self.aw_reg = None
        if down.w.fired:
            self.wbuf.pop_w()
        if down.r.fired and down.r.payload.last:
            self.out_frags -= 1
        if up.r.fired and up.r.payload.last:
            tr = self.reads.pop(up.r.payload.txn_id)
            self._complete(tr, cycle)
        if down.b.fired:
            self.out_frags -= 1
            tr = self.writes[down.b.payload.txn_id]
            tr.b_resps.append(down.b.payload)
            if up.b.fired:
                del self.writes[tr.req.txn_id]
                self._complete(tr, cycle)

        frag_len = self.cfg.frag_len
        if up.ar.fired:
            tr = _Txn(up.ar.payload, cycle, frag_len)
            self.reads[tr.req.txn_id] = tr
            self.split_r.append(tr)
            self.originals += 1
        if up.aw.fired:
            tr = _Txn(up.aw.payload, cycle, frag_len)
            if self.wbuf.store_and_forward and tr.gran > self.wbuf.depth:
                raise RealmConfigError(
                    f"{self.name}: unsplittable {tr.req.len_beats}-beat write exceeds buffer"
                )
            self.writes[tr.req.txn_id] = tr
            self.split_w.append(tr)
            self.w_expect.append(tr)
            self.originals += 1
        if up.w.fired:
            tr = self.w_expect[0]
            pos = tr.w_received
            fi, bi = divmod(pos, tr.gran)
            flen = tr.frags[fi].len_beats
            self.wbuf.push_w(
                StagedBeat(
                    tr.req.txn_id, fi, bi, bi == flen - 1, tr.req.manager_tid, up.w.payload.wdata
                )
            )
            tr.w_received += 1
            if tr.w_received == tr.req.len_beats:
                self.w_expect.popleft()

        replenish(self.table, now)

        depleted = self.table.any_depleted()
        if depleted:
            if self.split_r or self.split_w:
                self.budget_stall_cycles += 1
        else:
            if self._prio_write:
                self._emit_write(now)
                self._emit_read(now)
            else:
                self._emit_read(now)
                self._emit_write(now)
            self._prio_write = not self._prio_write

        if self.aw_reg is None and self.wbuf.store_and_forward:
            rel = self.wbuf.releasable()
            if rel is not None:
                self.aw_reg = self.wbuf.release()
                self.wbuf_delay_total += now - rel[1]
                self.wbuf_released += 1

        self._update_isolation(now)

    def _commit_bypass(self, cycle: int) -> None:
        up = self.up
        if up.ar.fired:
            self.originals += 1
        if up.aw.fired:
            self.originals += 1
        if up.r.fired and up.r.payload.last:
            self.originals -= 1
        if up.b.fired:
            self.originals -= 1
        if self.staged and self.originals == 0:
            self._apply(cycle + 1, self.staged)
            self.staged = {}

    def _update_isolation(self, now: int) -> None:
        prev = self.iso
        self.iso = isolation_tick(
            prev,
            user_request=self.user_isolate,
            reconfig_request=bool(self.staged),
            budget_depleted=self.table.any_depleted(),
            outstanding=self.originals,
        )
        if (
            self.staged
            and self.iso.mode == Mode.ISOLATED
            and self.iso.cause == Cause.RECONFIG
            and self._drained()
        ):
            self._apply(now, self.staged)
            self.staged = {}
            self.iso = isolation_tick(
                self.iso,
                user_request=self.user_isolate,
                budget_depleted=self.table.any_depleted(),
                outstanding=self.originals,
            )
        if self.iso.mode != prev.mode or self.iso.cause != prev.cause:
            self.isolation_log.append((now, self.iso.mode, self.iso.cause))

    def _limit(self, frag: BurstRequest) -> int:
        lim = self.cfg.max_outstanding
        if self.cfg.throttle_enabled:
            idx = self.table.lookup(frag.addr)
            if idx is not None:
                st = self.table.states[idx]
                lim = min(lim, throttle_limit(st.remaining_budget, self.table.configs[idx].budget_bytes, lim))
        return lim

    def _take(self, queue: deque[_Txn], now: int) -> Optional[BurstRequest]:
        tr = queue[0]
        frag = tr.frags[tr.next_frag]
        if self.out_frags >= self._limit(frag):
            return None
        if not mr_account(self.table, frag, now).granted:
            return None
        self.out_frags += 1
        self.fragments_emitted += 1
        tr.next_frag += 1
        if tr.next_frag == len(tr.frags):
            queue.popleft()
        return frag

    def _emit_read(self, now: int) -> None:
        if self.split_r and self.ar_reg is None:
            frag = self._take(self.split_r, now)
            if frag is not None:
                self.ar_reg = frag

    def _emit_write(self, now: int) -> None:
        if not self.split_w:
            return
        if self.wbuf.store_and_forward:
            if not self.wbuf.accepts_aw():
                return
        elif self.aw_reg is not None:
            return
        frag = self._take(self.split_w, now)
        if frag is not None:
            fwd = self.wbuf.add_fragment(frag, now)
            if fwd is not None:
                self.aw_reg = fwd

    def _complete(self, tr: _Txn, cycle: int) -> None:
        self.originals -= 1
        idx = self.table.lookup(tr.req.addr)
        if idx is not None:
            st = self.table.states[idx]
            st.txn_count += 1
            st.latency_accumulator += cycle - tr.accept_cycle

    def close(self, now: int) -> None:
        self.table.close(now)

    def pending(self) -> list[str]:
        out = [f"read txn {t} ({tr.req.len_beats} beats)" for t, tr in self.reads.items()]
        out += [
            f"write txn {t} ({tr.w_received}/{tr.req.len_beats} W beats in)"
            for t, tr in self.writes.items()
        ]
        return out
