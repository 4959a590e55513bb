"""Two-phase cycle engine and the valid/ready channel primitive.

Every cycle is evaluated in two phases:

1. *Combinational*: each component drives its outgoing ``valid``/``payload``
   and incoming ``ready`` signals from its registered state and the current
   signal values.  The pass is repeated until no signal changes.
2. *Commit*: a channel fires iff ``valid and ready``.  Every component then
   updates its registered state from the fired channels.

Components never write registered state during phase 1 and never touch
channel signals during phase 2, so no component can observe another's
same-cycle registered update.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Generic, Iterable, Optional, TypeVar

T = TypeVar("T")


class SimError(RuntimeError):
    """Base class for fatal simulation diagnostics."""


class CombinationalLoopError(SimError):
    def __init__(self, cycle: int, iterations: int):
        super().__init__(
            f"combinational loop: signals did not settle after {iterations} "
            f"passes in cycle {cycle}"
        )
        self.cycle = cycle


class SimTimeout(SimError):
    def __init__(self, cycle: int, pending: list[str]):
        lines = "\n  ".join(pending) if pending else "(none)"
        super().__init__(f"timeout at cycle {cycle}; pending transactions:\n  {lines}")
        self.cycle = cycle
        self.pending = pending


@dataclass
class SimClock:
    cycle: int = 0


class Handshake(Generic[T]):
    """One valid/ready channel.  A transfer happens iff both are high."""

    __slots__ = ("name", "valid", "ready", "payload", "fired", "transfers", "_world", "_listeners")

    def __init__(self, name: str = ""):
        self.name = name
        self.valid = False
        self.ready = False
        self.payload: Optional[T] = None
        self.fired = False
        self.transfers = 0
        self._world: Optional[World] = None
        self._listeners: list[Component] = []

    def _changed(self) -> None:
        w = self._world
        if w is not None:
            cur = w.current
            for c in self._listeners:
                if c is not cur:
                    c._stale = True

    def drive(self, valid: bool, payload: Optional[T] = None) -> None:
        if not valid:
            payload = None
        if valid != self.valid or payload is not self.payload:
            self.valid = valid
            self.payload = payload
            self._changed()

    def accept(self, ready: bool) -> None:
        if ready != self.ready:
            self.ready = ready
            self._changed()

    def __repr__(self) -> str:
        return f"Handshake({self.name!r}, valid={self.valid}, ready={self.ready})"


class Component:
    """Base class for anything clocked by the world.

    Subclasses override :meth:`comb` (pure function of state and input
    signals) and :meth:`commit` (registered update after transfers).
    """

    name = "component"
    _stale = True

    def channels(self) -> Iterable[Handshake]:
        return ()

    def comb(self, cycle: int) -> None:
        pass

    def commit(self, cycle: int) -> None:
        pass

    def pending(self) -> list[str]:
        """Human-readable description of in-flight work, for timeout dumps."""
        return []


class World:
    """A set of components and the channels between them."""

    def __init__(self) -> None:
        self.clock = SimClock()
        self.components: list[Component] = []
        self.channels: list[Handshake] = []
        self._seen: set[int] = set()
        self.current: Optional[Component] = None
        self._reversed: list[Component] = []

    @property
    def cycle(self) -> int:
        return self.clock.cycle

    def add(self, component: Component) -> Component:
        self.components.append(component)
        self._reversed = self.components[::-1]
        for ch in component.channels():
            self.register_channel(ch)
            if component not in ch._listeners:
                ch._listeners.append(component)
        return component

    def register_channel(self, ch: Handshake) -> None:
        if id(ch) in self._seen:
            return
        self._seen.add(id(ch))
        ch._world = self
        self.channels.append(ch)

    def step(self) -> SimClock:
        cycle = self.clock.cycle
        comps = self.components
        chans = self.channels
        for ch in chans:
            ch.valid = False
            ch.ready = False
            ch.payload = None
        # A component is re-evaluated only when a channel it touches changed
        # since its last evaluation; passes alternate direction so that
        # valid (forward) and ready (backward) paths settle quickly.
        # (+1: the final pass that finds nothing stale confirms settlement)
        limit = len(comps) * (len(chans) + 1) + 1
        for c in comps:
            c._stale = True
        order = comps
        rev = self._reversed
        for _ in range(limit):
            ran = False
            for c in order:
                if c._stale:
                    c._stale = False
                    self.current = c
                    c.comb(cycle)
                    ran = True
            if not ran:
                break
            order = rev if order is comps else comps
        else:
            raise CombinationalLoopError(cycle, limit)
        self.current = None
        for ch in chans:
            f = ch.valid and ch.ready
            ch.fired = f
            if f:
                ch.transfers += 1
        for c in comps:
            c.commit(cycle)
        self.clock.cycle = cycle + 1
        return self.clock

    def run_until(self, predicate: Callable[[World], bool], max_cycles: int) -> int:
        """Step until ``predicate(world)`` holds and return that cycle."""
        if max_cycles <= 0:
            raise ValueError("max_cycles must be positive")
        start = self.clock.cycle
        while not predicate(self):
            if self.clock.cycle - start >= max_cycles:
                dump: list[str] = []
                for c in self.components:
                    dump.extend(f"{c.name}: {p}" for p in c.pending())
                raise SimTimeout(self.clock.cycle, dump)
            self.step()
        return self.clock.cycle

    def run(self, cycles: int) -> int:
        for _ in range(cycles):
            self.step()
        return self.clock.cycle


def snapshot(world: World) -> list[tuple[str, bool, bool, Any]]:
    """Signal values of the last evaluated cycle (for debugging/tests)."""
    return [(ch.name, ch.valid, ch.ready, ch.payload) for ch in world.channels]
