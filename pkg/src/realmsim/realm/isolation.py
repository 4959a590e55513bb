"""Isolation block state machine."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional


class Mode(enum.IntEnum):
    CONNECTED = 0
    ISOLATING = 1
    ISOLATED = 2


class Cause(enum.IntEnum):
    NONE = 0
    USER = 1
    BUDGET = 2
    RECONFIG = 3


@dataclass(frozen=True)
class IsolationState:
    mode: Mode = Mode.CONNECTED
    outstanding_count: int = 0
    cause: Cause = Cause.NONE

    @property
    def blocks_new(self) -> bool:
        return self.mode != Mode.CONNECTED

    @property
    def status_word(self) -> int:
        """Encoding exposed through ISOLATE_STATUS: mode in [1:0], cause in [5:4]."""
        return int(self.mode) | (int(self.cause) << 4)


def isolation_tick(
    state: IsolationState,
    *,
    user_request: bool = False,
    reconfig_request: bool = False,
    budget_depleted: bool = False,
    outstanding: Optional[int] = None,
) -> IsolationState:
    """Next isolation state.

    User and reconfiguration isolation drain outstanding transactions before
    reporting isolated; budget isolation only blocks new address handshakes
    and releases as soon as the budget is replenished.
    """
    n = state.outstanding_count if outstanding is None else outstanding
    draining = None
    if user_request:
        draining = Cause.USER
    elif reconfig_request:
        draining = Cause.RECONFIG
    if draining is not None:
        if state.mode == Mode.ISOLATED and state.cause in (Cause.USER, Cause.RECONFIG):
            return IsolationState(Mode.ISOLATED, n, state.cause)
        return IsolationState(Mode.ISOLATED if n == 0 else Mode.ISOLATING, n, draining)
    if budget_depleted:
        return IsolationState(Mode.ISOLATED, n, Cause.BUDGET)
    return IsolationState(Mode.CONNECTED, n, Cause.NONE)
