"""W-beat staging between the splitter and the downstream port.

In store-and-forward mode an AW fragment is released downstream only once
all of its W beats sit in the buffer, so a manager that withholds write
data never reserves the downstream W channel.  In cut-through mode (no
write buffer configured) the same structure is a two-entry register FIFO
and fragments are released as soon as they leave the splitter.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional

from ..axi import BurstRequest

AW_SLOTS = 2


@dataclass(frozen=True, slots=True)
class StagedBeat:
    txn_id: int
    frag_index: int
    beat_index: int  # within the fragment
    last: bool  # last beat of the fragment
    manager_tid: int = 0
    wdata: Optional[int] = None


class WriteBuffer:
    def __init__(self, depth: int, store_and_forward: bool = True):
        if depth < 1:
            raise ValueError("write buffer depth must be at least one beat")
        self.depth = depth
        self.store_and_forward = store_and_forward
        self.beats: deque[StagedBeat] = deque()
        self.counts: dict[tuple[int, int], int] = {}
        self.slots: deque[tuple[BurstRequest, int]] = deque()  # (fragment, emit cycle)
        self.released: set[tuple[int, int]] = set()
        self.peak_occupancy = 0

    @property
    def occupancy(self) -> int:
        return len(self.beats)

    def accepts_w(self) -> bool:
        return len(self.beats) < self.depth

    def accepts_aw(self) -> bool:
        return not self.store_and_forward or len(self.slots) < AW_SLOTS

    def push_w(self, beat: StagedBeat) -> None:
        if len(self.beats) >= self.depth:
            raise OverflowError("write buffer overflow")
        self.beats.append(beat)
        key = (beat.txn_id, beat.frag_index)
        self.counts[key] = self.counts.get(key, 0) + 1
        if len(self.beats) > self.peak_occupancy:
            self.peak_occupancy = len(self.beats)

    def add_fragment(self, frag: BurstRequest, cycle: int) -> Optional[BurstRequest]:
        """Stage an AW fragment; returns it if it may be forwarded immediately."""
        if not self.store_and_forward:
            self.released.add((frag.txn_id, frag.frag_index))
            return frag
        self.slots.append((frag, cycle))
        return None

    def releasable(self) -> Optional[tuple[BurstRequest, int]]:
        """Oldest staged fragment whose write data is fully buffered."""
        if not self.slots:
            return None
        frag, t = self.slots[0]
        if self.counts.get((frag.txn_id, frag.frag_index), 0) >= frag.len_beats:
            return frag, t
        return None

    def release(self) -> BurstRequest:
        frag, _ = self.slots.popleft()
        self.released.add((frag.txn_id, frag.frag_index))
        return frag

    def w_head(self) -> Optional[StagedBeat]:
        if self.beats:
            b = self.beats[0]
            if (b.txn_id, b.frag_index) in self.released:
                return b
        return None

    def pop_w(self) -> StagedBeat:
        b = self.beats.popleft()
        key = (b.txn_id, b.frag_index)
        self.counts[key] -= 1
        if b.last:
            self.released.discard(key)
            if not self.counts[key]:
                del self.counts[key]
        return b

    def __repr__(self) -> str:
        return (
            f"WriteBuffer(occupancy={len(self.beats)}/{self.depth}, "
            f"staged_aw={len(self.slots)})"
        )
