"""Deterministic server placement for the learned balancer.

Servers are not hashed: the first one sits at position 0 and every later one
bisects the longest free arc. Keys go to their clockwise successor unless
that server already holds ``epsilon`` keys, in which case they spill further
clockwise.
"""

from __future__ import annotations

import bisect
import math
from typing import NamedTuple

import numpy as np

from .errors import CannotRemoveLast, CapacityExhausted, DuplicateServer, NoServers, UnknownServer, ValidationError
from .metrics import std_metric
from .ring import DEFAULT_RING_SIZE, arcs_between, check_ring_size

DEFAULT_LOAD_FACTOR = 1.25


class MigrationRecord(NamedTuple):
    key: object
    src: object
    dst: object


def default_epsilon(m: int, n: int, c: float = DEFAULT_LOAD_FACTOR) -> int:
    """Load threshold ``ceil(c * m / n)`` matching the bounded-load baseline."""
    if n < 1:
        raise NoServers("epsilon needs at least one server")
    return max(1, math.ceil(c * m / n))


class ServerTable:
    def __init__(self, epsilon: float = math.inf, T: int = DEFAULT_RING_SIZE):
        if not epsilon > 0:
            raise ValidationError("epsilon must be positive")
        self.T = check_ring_size(T)
        self.epsilon = epsilon
        self.positions: list[int] = []  # sorted
        self.ids: list = []  # server id at each entry of positions
        self.loads: dict = {}

    def __len__(self):
        return len(self.positions)

    def position_of(self, server) -> int:
        try:
            return self.positions[self.ids.index(server)]
        except ValueError:
            raise UnknownServer(f"server {server!r} not in table") from None

    def add_server(self, server) -> int:
        """Place ``server`` at the floor midpoint of the longest arc (ties: lowest start)."""
        if server in self.loads:
            raise DuplicateServer(f"server {server!r} already placed")
        if not self.positions:
            pos = 0
        else:
            arc = max(arcs_between(self.positions, self.T), key=lambda a: (a.length, -a.start))
            if arc.length < 2:
                raise ValidationError("ring has no free position left")
            pos = (arc.start + arc.length // 2) % self.T
        i = bisect.bisect_left(self.positions, pos)
        self.positions.insert(i, pos)
        self.ids.insert(i, server)
        self.loads[server] = 0
        return pos

    def _walk(self, start: int):
        n = len(self.ids)
        for step in range(n):
            server = self.ids[(start + step) % n]
            if self.loads[server] < self.epsilon:
                self.loads[server] += 1
                return server
        raise CapacityExhausted(f"all {n} servers hold {self.epsilon} keys")

    def assign_with_bound(self, pos: int):
        """Give the key at ring position ``pos`` to the first non-full server clockwise."""
        if not self.positions:
            raise NoServers("no servers placed")
        i = bisect.bisect_left(self.positions, int(pos))
        return self._walk(i if i < len(self.positions) else 0)

    def assign_many(self, positions) -> list:
        if not self.positions:
            raise NoServers("no servers placed")
        idx = np.searchsorted(np.asarray(self.positions, dtype=np.int64),
                              np.asarray(positions, dtype=np.int64), side="left")
        idx[idx == len(self.positions)] = 0
        return [self._walk(int(i)) for i in idx]

    def remove_server(self, server, assignments: dict | None = None) -> list[MigrationRecord]:
        """Drop ``server`` and hand its keys to the next server clockwise.

        ``assignments`` maps key -> server and is updated in place. Only keys
        owned by the removed server move; they spill past the successor when
        it would exceed ``epsilon``.
        """
        if server not in self.loads:
            raise UnknownServer(f"server {server!r} not in table")
        if len(self.positions) == 1:
            raise CannotRemoveLast("cannot remove the last server")
        i = self.ids.index(server)
        del self.positions[i]
        del self.ids[i]
        del self.loads[server]
        start = i if i < len(self.ids) else 0
        moves = []
        if assignments:
            for key, owner in assignments.items():
                if owner == server:
                    dst = self._walk(start)
                    assignments[key] = dst
                    moves.append(MigrationRecord(key, server, dst))
        return moves

    def load_report(self) -> dict:
        if not self.ids:
            return {"loads": {}, "std": None}
        loads = {s: self.loads[s] for s in self.ids}
        return {"loads": loads, "std": std_metric(list(loads.values()))}


def even_table(n: int, epsilon=math.inf, T: int = DEFAULT_RING_SIZE) -> ServerTable:
    """Table with servers ``0..n-1`` added in order."""
    table = ServerTable(epsilon, T)
    for s in range(n):
        table.add_server(s)
    return table
