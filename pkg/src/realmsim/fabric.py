"""Burst-granular round-robin crossbar and fixed-latency memory subordinates."""
from __future__ import annotations

from collections import deque
from typing import Iterable, Optional, Sequence

from .axi import AxiLink, BurstRequest, ReadBeat, Resp, WriteResponse, worst
from .kernel import Component


def rr_arbitrate(requesters: Iterable[int], last_grant: int, n: int) -> int:
    """Next requester after ``last_grant`` in cyclic order over ``n`` ports."""
    best = None
    best_dist = n + 1
    for r in requesters:
        d = (r - last_grant - 1) % n
        if d < best_dist:
            best, best_dist = r, d
    if best is None:
        raise ValueError("rr_arbitrate needs at least one requester")
    return best


class MemorySubordinate(Component):
    """Pipelined fixed-latency memory serving one burst at a time.

    A read burst accepted at ``t`` returns its beats at ``t + latency + k``
    and occupies the data path for ``len_beats`` cycles; a write occupies it
    from AW acceptance until its last W beat and answers ``latency`` cycles
    after that beat.  With ``shared_path`` reads and writes share one path.
    """

    def __init__(
        self,
        name: str,
        link: AxiLink,
        start: int,
        end: int,
        latency: int = 8,
        shared_path: bool = True,
    ):
        if latency < 1:
            raise ValueError("access latency must be at least one cycle")
        self.name = name
        self.link = link
        self.start = start
        self.end = end
        self.latency = latency
        self.shared_path = shared_path
        self.r_busy_until = 0
        self.w_busy_until = 0
        self.active_write: Optional[list] = None  # [req, beats received, status]
        self.r_queue: deque[tuple[int, ReadBeat]] = deque()
        self.b_queue: deque[tuple[int, WriteResponse]] = deque()
        self.reads_served = 0
        self.writes_served = 0
        self.accept_log: list[tuple[int, BurstRequest]] = []
        self.log_accepts = False

    def channels(self):
        return self.link.channels()

    def in_range(self, addr: int) -> bool:
        return self.start <= addr < self.end

    def _read_free(self, cycle: int) -> bool:
        if self.shared_path:
            return cycle >= self.r_busy_until and cycle >= self.w_busy_until and self.active_write is None
        return cycle >= self.r_busy_until

    def _write_free(self, cycle: int) -> bool:
        if self.shared_path:
            return self._read_free(cycle)
        return cycle >= self.w_busy_until and self.active_write is None

    def comb(self, cycle: int) -> None:
        ln = self.link
        ln.ar.accept(self._read_free(cycle))
        ln.aw.accept(self._write_free(cycle))
        ln.w.accept(self.active_write is not None or (ln.aw.valid and ln.aw.ready))
        if self.r_queue and self.r_queue[0][0] <= cycle:
            ln.r.drive(True, self.r_queue[0][1])
        else:
            ln.r.drive(False)
        if self.b_queue and self.b_queue[0][0] <= cycle:
            ln.b.drive(True, self.b_queue[0][1])
        else:
            ln.b.drive(False)

    def commit(self, cycle: int) -> None:
        ln = self.link
        if ln.r.fired:
            self.r_queue.popleft()
        if ln.b.fired:
            self.b_queue.popleft()
        if ln.ar.fired:
            req = ln.ar.payload
            if self.log_accepts:
                self.accept_log.append((cycle, req))
            status, data = self.read_words(req)
            first = cycle + self.latency
            if self.r_queue:
                first = max(first, self.r_queue[-1][0] + 1)
            n = req.len_beats
            for k in range(n):
                self.r_queue.append(
                    (
                        first + k,
                        ReadBeat(
                            req.txn_id,
                            k,
                            k == n - 1,
                            status,
                            req.manager_tid,
                            req.frag_offset,
                            data,
                        ),
                    )
                )
            self.r_busy_until = cycle + n
            self.reads_served += 1
        if ln.aw.fired:
            if self.log_accepts:
                self.accept_log.append((cycle, ln.aw.payload))
            self.active_write = [ln.aw.payload, 0, Resp.OKAY]
        if ln.w.fired:
            aw = self.active_write
            aw[1] += 1
            req = aw[0]
            aw[2] = worst(aw[2], self.write_beat(req, ln.w.payload))
            if aw[1] == req.len_beats:
                status = aw[2]
                t = cycle + self.latency
                if self.b_queue:
                    t = max(t, self.b_queue[-1][0] + 1)
                self.b_queue.append(
                    (t, WriteResponse(req.txn_id, status, req.manager_tid, req.frag_index))
                )
                self.active_write = None
                self.w_busy_until = cycle + 1
                self.writes_served += 1

    def read_words(self, req: BurstRequest) -> tuple[Resp, Optional[int]]:
        """Status and (single-beat) data for an accepted read."""
        return (Resp.OKAY if self.in_range(req.addr) else Resp.DECERR), None

    def write_beat(self, req: BurstRequest, beat) -> Resp:
        return Resp.OKAY if self.in_range(req.addr) else Resp.DECERR

    def pending(self) -> list[str]:
        out = []
        if self.active_write is not None:
            req, got, _ = self.active_write
            out.append(f"write txn {req.txn_id} from tid {req.manager_tid}: {got}/{req.len_beats} W beats")
        if self.r_queue:
            out.append(f"{len(self.r_queue)} read beats queued")
        return out


class Crossbar(Component):
    """Round-robin crossbar arbitrating on burst granularity.

    ``managers`` are the links on which the crossbar acts as subordinate,
    ``subordinates`` the links towards memories.  ``address_map`` gives the
    half-open range decoded to each subordinate; unmatched addresses go to
    ``default_sub``.  ``port_tids`` maps response ``manager_tid`` back to the
    manager port.
    """

    def __init__(
        self,
        name: str,
        managers: Sequence[AxiLink],
        subordinates: Sequence[AxiLink],
        address_map: Sequence[tuple[int, int]],
        port_tids: Sequence[int],
        default_sub: int = 0,
        shared_path: bool = True,
        record_trace: bool = False,
    ):
        if len(address_map) != len(subordinates):
            raise ValueError("one address range per subordinate required")
        if len(port_tids) != len(managers):
            raise ValueError("one TID per manager port required")
        self.name = name
        self.mgrs = list(managers)
        self.subs = list(subordinates)
        self.address_map = list(address_map)
        self.default_sub = default_sub
        self.shared_path = shared_path
        self.port_of = {tid: i for i, tid in enumerate(port_tids)}
        self.port_tids = list(port_tids)
        n, ns = len(self.mgrs), len(self.subs)
        # arbitration state per subordinate and path (0: shared or read, 1: write)
        self.last_grant = [[n - 1, n - 1] for _ in range(ns)]
        self.prefer_write = [[False] * n for _ in range(ns)]
        self.holder: list[list[Optional[tuple[int, Optional[int]]]]] = [[None, None] for _ in range(ns)]
        self.w_route: list[deque[list]] = [deque() for _ in range(n)]
        self.w_order: list[deque[int]] = [deque() for _ in range(ns)]
        self.r_lock: list[Optional[int]] = [None] * n
        self.wait_cycles = [0] * n
        self.interference = [[0] * n for _ in range(n)]
        self.grants = [[0] * ns for _ in range(n)]
        self.record_trace = record_trace
        self.trace: list[tuple] = []
        # per-cycle combinational decisions
        self._ar_tgt: list[Optional[int]] = [None] * n
        self._aw_tgt: list[Optional[int]] = [None] * n
        self._winner: list[list[Optional[tuple[int, str]]]] = [[None, None] for _ in range(ns)]
        self._writer: list[Optional[int]] = [None] * ns
        self._arw: list[tuple[Optional[int], Optional[int]]] = [(None, None)] * ns
        self._cands: list[list[list[tuple[int, bool]]]] = [[[], []] for _ in range(ns)]
        self._r_sel: list[Optional[int]] = [None] * n
        self._b_sel: list[Optional[int]] = [None] * n

    def channels(self):
        out = []
        for ln in self.mgrs + self.subs:
            out.extend(ln.channels())
        return out

    def decode(self, addr: int) -> int:
        for i, (lo, hi) in enumerate(self.address_map):
            if lo <= addr < hi:
                return i
        return self.default_sub

    def _path(self, kind: str) -> int:
        return 0 if self.shared_path or kind == "r" else 1

    def comb(self, cycle: int) -> None:
        mgrs, subs = self.mgrs, self.subs
        n = len(mgrs)
        ar_tgt = self._ar_tgt
        aw_tgt = self._aw_tgt
        cands = self._cands
        for c in cands:
            c[0].clear()
            c[1].clear()
        wp = 0 if self.shared_path else 1
        decode = self.decode
        for m, ln in enumerate(mgrs):
            p = ln.ar.payload
            if p is None:
                ar_tgt[m] = None
            else:
                t = ar_tgt[m] = decode(p.addr)
                cands[t][0].append((m, False))
            p = ln.aw.payload
            if p is None:
                aw_tgt[m] = None
            else:
                t = aw_tgt[m] = decode(p.addr)
                cands[t][wp].append((m, True))

        arw = self._arw
        winner = self._winner
        for s, sl in enumerate(subs):
            ar_w = aw_w = None
            for p in (0, 1):
                c = cands[s][p]
                if not c:
                    winner[s][p] = None
                    continue
                if len(c) == 1:
                    m, is_w = c[0]
                else:
                    last = self.last_grant[s][p]
                    best = None
                    best_d = n + 1
                    for mm, _ in c:
                        d = (mm - last - 1) % n
                        if d < best_d:
                            best, best_d = mm, d
                    m = best
                    kinds = [k for mm, k in c if mm == m]
                    is_w = kinds[0] if len(kinds) == 1 else self.prefer_write[s][m]
                winner[s][p] = (m, "w" if is_w else "r")
                if is_w:
                    aw_w = m
                else:
                    ar_w = m
            sl.ar.drive(ar_w is not None, None if ar_w is None else mgrs[ar_w].ar.payload)
            sl.aw.drive(aw_w is not None, None if aw_w is None else mgrs[aw_w].aw.payload)
            arw[s] = (ar_w, aw_w)

        for m, ln in enumerate(mgrs):
            t = ar_tgt[m]
            ln.ar.accept(t is not None and arw[t][0] == m and subs[t].ar.ready)
            t = aw_tgt[m]
            ln.aw.accept(t is not None and arw[t][1] == m and subs[t].aw.ready)

        # W routing follows AW acceptance order per subordinate
        w_src: list[Optional[int]] = [None] * n
        for s, sl in enumerate(subs):
            writer = None
            if self.w_order[s]:
                m = self.w_order[s][0]
                if self.w_route[m] and self.w_route[m][0][0] == s:
                    writer = m
            else:
                aw_m = self._arw[s][1]
                if aw_m is not None and mgrs[aw_m].aw.ready and not self.w_route[aw_m]:
                    writer = aw_m
            self._writer[s] = writer
            if writer is None:
                sl.w.drive(False)
            else:
                sl.w.drive(mgrs[writer].w.valid, mgrs[writer].w.payload)
                w_src[writer] = s
        for m, ln in enumerate(mgrs):
            s = w_src[m]
            ln.w.accept(s is not None and subs[s].w.ready)

        # responses back to managers
        r_offer: list[list[int]] = [[] for _ in range(n)]
        b_offer: list[list[int]] = [[] for _ in range(n)]
        for s, sl in enumerate(subs):
            if sl.r.valid:
                r_offer[self.port_of[sl.r.payload.manager_tid]].append(s)
            if sl.b.valid:
                b_offer[self.port_of[sl.b.payload.manager_tid]].append(s)
        r_sel = self._r_sel
        b_sel = self._b_sel
        for m, ln in enumerate(mgrs):
            lock = self.r_lock[m]
            if lock is not None:
                r_sel[m] = lock if lock in r_offer[m] else None
            else:
                r_sel[m] = r_offer[m][0] if r_offer[m] else None
            b_sel[m] = b_offer[m][0] if b_offer[m] else None
            if r_sel[m] is None:
                ln.r.drive(False)
            else:
                ln.r.drive(True, subs[r_sel[m]].r.payload)
            if b_sel[m] is None:
                ln.b.drive(False)
            else:
                ln.b.drive(True, subs[b_sel[m]].b.payload)
        for s, sl in enumerate(subs):
            rr = False
            if sl.r.valid:
                m = self.port_of[sl.r.payload.manager_tid]
                rr = r_sel[m] == s and mgrs[m].r.ready
            sl.r.accept(rr)
            br = False
            if sl.b.valid:
                m = self.port_of[sl.b.payload.manager_tid]
                br = b_sel[m] == s and mgrs[m].b.ready
            sl.b.accept(br)

    def _busy_holder(self, s: int, p: int, cycle: int) -> Optional[int]:
        h = self.holder[s][p]
        if h is None:
            return None
        m, until = h
        if until is None or until > cycle:
            return m
        return None

    def commit(self, cycle: int) -> None:
        mgrs, subs = self.mgrs, self.subs
        n = len(mgrs)
        for s, sl in enumerate(subs):
            fired_m: list[Optional[int]] = [None, None]
            holders = [self._busy_holder(s, 0, cycle), self._busy_holder(s, 1, cycle)]
            if sl.ar.fired:
                m = self._arw[s][0]
                p = self._path("r")
                fired_m[p] = m
                self.last_grant[s][p] = m
                self.prefer_write[s][m] = True
                self.holder[s][p] = (m, cycle + sl.ar.payload.len_beats)
                self.grants[m][s] += 1
            if sl.aw.fired:
                m = self._arw[s][1]
                p = self._path("w")
                fired_m[p] = m
                self.last_grant[s][p] = m
                self.prefer_write[s][m] = False
                self.w_route[m].append([s, sl.aw.payload.len_beats])
                self.w_order[s].append(m)
                self.holder[s][p] = (m, None)
                self.grants[m][s] += 1
            if sl.w.fired:
                m = self._writer[s]
                route = self.w_route[m][0]
                route[1] -= 1
                if route[1] == 0:
                    self.w_route[m].popleft()
                    self.w_order[s].popleft()
                    p = self._path("w")
                    h = self.holder[s][p]
                    if h is not None and h[0] == m and h[1] is None:
                        self.holder[s][p] = (m, cycle + 1)
            # interference: requester not accepted while another manager holds the path
            for p in (0, 1):
                w = self._winner[s][p]
                if w is None:
                    continue
                blocker = holders[p] if holders[p] is not None else fired_m[p]
                for m in range(n):
                    if (self._ar_tgt[m] == s and self._path("r") == p and not mgrs[m].ar.fired) or (
                        self._aw_tgt[m] == s and self._path("w") == p and not mgrs[m].aw.fired
                    ):
                        if blocker is not None and blocker != m:
                            self.interference[m][blocker] += 1
                            self.wait_cycles[m] += 1
                        if self.record_trace:
                            self.trace.append((cycle, s, p, m, blocker))
        for m, ln in enumerate(mgrs):
            if ln.r.fired:
                self.r_lock[m] = None if ln.r.payload.last else self._r_sel[m]

    def pending(self) -> list[str]:
        out = []
        for m, routes in enumerate(self.w_route):
            for s, left in routes:
                out.append(f"port {m} owes {left} W beats to subordinate {s}")
        return out
