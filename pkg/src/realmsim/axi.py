"""Transaction-level AXI4 shapes: bursts, beats and responses.

Only INCR bursts are modeled and no data is carried except for the
optional word used by configuration-space accesses.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Optional

from .kernel import Handshake

PAGE_BYTES = 4096
MAX_BURST_BEATS = 256


class Resp(enum.IntEnum):
    OKAY = 0b00
    EXOKAY = 0b01
    SLVERR = 0b10
    DECERR = 0b11


# Worst-status precedence used when merging responses.
_SEVERITY = {Resp.OKAY: 0, Resp.EXOKAY: 1, Resp.SLVERR: 2, Resp.DECERR: 3}


def worst(a: Resp, b: Resp) -> Resp:
    return a if _SEVERITY[a] >= _SEVERITY[b] else b


class BurstError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class BurstRequest:
    txn_id: int
    manager_tid: int
    addr: int
    len_beats: int
    beat_bytes: int = 8
    is_write: bool = False
    modifiable: bool = True
    atomic: bool = False
    issue_cycle: int = 0
    # Fragment lineage; an unsplit burst is fragment 0 of 1 at offset 0.
    frag_offset: int = 0
    frag_index: int = 0
    frag_count: int = 1
    wdata: Optional[int] = None

    def __post_init__(self) -> None:
        if not 1 <= self.len_beats <= MAX_BURST_BEATS:
            raise BurstError(f"len_beats {self.len_beats} outside 1..{MAX_BURST_BEATS}")
        bb = self.beat_bytes
        if bb < 1 or bb & (bb - 1):
            raise BurstError(f"beat_bytes {bb} is not a power of two")
        if self.addr < 0 or self.addr % bb:
            raise BurstError(f"address {self.addr:#x} not aligned to {bb} bytes")
        first_page = self.addr // PAGE_BYTES
        last_page = (self.addr + self.len_beats * bb - 1) // PAGE_BYTES
        if first_page != last_page:
            raise BurstError(f"burst at {self.addr:#x} crosses a 4 KiB boundary")

    @property
    def nbytes(self) -> int:
        return self.len_beats * self.beat_bytes

    @property
    def is_last_fragment(self) -> bool:
        return self.frag_index == self.frag_count - 1

    def with_(self, **changes) -> BurstRequest:
        return replace(self, **changes)


@dataclass(frozen=True, slots=True)
class WriteBeat:
    txn_id: int
    beat_index: int
    last: bool
    manager_tid: int = 0
    wdata: Optional[int] = None


@dataclass(frozen=True, slots=True)
class ReadBeat:
    txn_id: int
    beat_index: int
    last: bool
    status: Resp = Resp.OKAY
    manager_tid: int = 0
    frag_offset: int = 0
    rdata: Optional[int] = None


@dataclass(frozen=True, slots=True)
class WriteResponse:
    txn_id: int
    status: Resp = Resp.OKAY
    manager_tid: int = 0
    frag_index: int = 0


def bytes_of(req: BurstRequest) -> int:
    return req.len_beats * req.beat_bytes


def beat_address(req: BurstRequest, beat_index: int) -> int:
    if not 0 <= beat_index < req.len_beats:
        raise IndexError(f"beat {beat_index} outside burst of {req.len_beats}")
    return req.addr + beat_index * req.beat_bytes


class AxiLink:
    """The five handshake channels between one manager and one subordinate side."""

    __slots__ = ("name", "aw", "w", "b", "ar", "r")

    def __init__(self, name: str):
        self.name = name
        self.aw: Handshake[BurstRequest] = Handshake(f"{name}.aw")
        self.w: Handshake[WriteBeat] = Handshake(f"{name}.w")
        self.b: Handshake[WriteResponse] = Handshake(f"{name}.b")
        self.ar: Handshake[BurstRequest] = Handshake(f"{name}.ar")
        self.r: Handshake[ReadBeat] = Handshake(f"{name}.r")

    def channels(self):
        return (self.aw, self.w, self.b, self.ar, self.r)
