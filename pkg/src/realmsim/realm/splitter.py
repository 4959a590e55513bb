"""Granular burst splitter: fragmentation, write-response coalescing, r.last gating."""
from __future__ import annotations

from dataclasses import replace
from typing import Sequence

from ..axi import MAX_BURST_BEATS, BurstRequest, ReadBeat, Resp, WriteResponse, worst

# AXI4 forbids the interconnect from altering non-modifiable bursts of this
# length or shorter.
NON_MODIFIABLE_LIMIT = 16


class LineageError(RuntimeError):
    """Responses or beats that do not belong to the tracked original burst."""


def is_splittable(req: BurstRequest) -> bool:
    if req.atomic:
        return False
    if not req.modifiable and req.len_beats <= NON_MODIFIABLE_LIMIT:
        return False
    return True


def effective_granularity(req: BurstRequest, frag_len: int) -> int:
    """Fragment length actually used for ``req`` at configured ``frag_len``."""
    if not is_splittable(req):
        return req.len_beats
    if not req.modifiable:
        return min(frag_len, NON_MODIFIABLE_LIMIT)
    return frag_len


def split_burst(req: BurstRequest, frag_len: int) -> list[BurstRequest]:
    if not 1 <= frag_len <= MAX_BURST_BEATS:
        raise ValueError(f"frag_len {frag_len} outside 1..{MAX_BURST_BEATS}")
    g = effective_granularity(req, frag_len)
    if g >= req.len_beats:
        return [req]
    count = -(-req.len_beats // g)
    frags = []
    for i in range(count):
        offset = i * g
        frags.append(
            replace(
                req,
                addr=req.addr + offset * req.beat_bytes,
                len_beats=min(g, req.len_beats - offset),
                frag_offset=offset,
                frag_index=i,
                frag_count=count,
            )
        )
    return frags


def coalesce_write_responses(resps: Sequence[WriteResponse]) -> WriteResponse:
    if not resps:
        raise LineageError("no write responses to coalesce")
    first = resps[0]
    status = Resp.OKAY
    for r in resps:
        if r.txn_id != first.txn_id or r.manager_tid != first.manager_tid:
            raise LineageError(
                f"response for txn {r.txn_id} mixed into txn {first.txn_id}"
            )
        status = worst(status, r.status)
    indices = sorted(r.frag_index for r in resps)
    if len(resps) > 1 and indices != list(range(len(resps))):
        raise LineageError(f"txn {first.txn_id}: fragment responses {indices} incomplete")
    return WriteResponse(first.txn_id, status, first.manager_tid, 0)


def gate_read_last(beat: ReadBeat, original_len: int, position: int) -> ReadBeat:
    """Re-derive ``last`` from the beat's position in the original burst."""
    if not 0 <= position < original_len:
        raise LineageError(
            f"txn {beat.txn_id}: beat position {position} beyond length {original_len}"
        )
    last = position == original_len - 1
    if last == beat.last:
        return beat
    return replace(beat, last=last)
