"""Consistent hashing (CH) and consistent hashing with bounded loads (CHBL)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CapacityExhausted, DuplicateServer, NoServers, UnknownServer, ValidationError
from .hashing import HashFn, hash_keys, hash_to_ring
from .ring import DEFAULT_RING_SIZE, check_ring_size

DEFAULT_VNODES = 100
DEFAULT_BOUND_C = 1.25


class CHRing:
    """Ring of virtual points, ``vnodes`` per server.

    A virtual point sits at ``hash(f"{salt}{server}#{replica}")``; on a
    collision the label gets ``#retry`` appended until the position is free.
    ``salt`` lets repeated experiments draw different placements with the
    same hash function.
    """

    def __init__(self, servers=(), vnodes: int = DEFAULT_VNODES, hash_fn="bkdr",
                 T: int = DEFAULT_RING_SIZE, salt: str = ""):
        if vnodes < 1:
            raise ValidationError("vnodes must be positive")
        self.vnodes = int(vnodes)
        self.hash = HashFn(hash_fn) if isinstance(hash_fn, str) else hash_fn
        self.T = check_ring_size(T)
        self.salt = salt
        self._owner_at = {}  # position -> server id
        self._points_of = {}  # server id -> list of positions
        self._dirty = True
        for s in servers:
            self.add_server(s)

    @property
    def servers(self):
        return list(self._points_of)

    def add_server(self, server) -> list[int]:
        if server in self._points_of:
            raise DuplicateServer(f"server {server!r} already on the ring")
        if len(self._owner_at) + self.vnodes > self.T:
            raise ValidationError("ring too small for another server's virtual nodes")
        points = []
        for replica in range(self.vnodes):
            label = f"{self.salt}{server}#{replica}"
            pos = hash_to_ring(label, self.hash, self.T)
            retry = 0
            while pos in self._owner_at:
                retry += 1
                pos = hash_to_ring(f"{label}#{retry}", self.hash, self.T)
            self._owner_at[pos] = server
            points.append(pos)
        self._points_of[server] = points
        self._dirty = True
        return points

    def remove_server(self, server) -> None:
        if server not in self._points_of:
            raise UnknownServer(f"server {server!r} not on the ring")
        for pos in self._points_of.pop(server):
            del self._owner_at[pos]
        self._dirty = True

    def _refresh(self):
        if self._dirty:
            order = sorted(self._owner_at)
            self._points = np.array(order, dtype=np.int64)
            self._owners = [self._owner_at[p] for p in order]
            self._dirty = False

    @property
    def points(self) -> np.ndarray:
        self._refresh()
        return self._points

    @property
    def owners(self) -> list:
        """Owner of each entry of ``points``."""
        self._refresh()
        return self._owners

    def key_position(self, key) -> int:
        return hash_to_ring(key, self.hash, self.T)

    def key_positions(self, keys) -> np.ndarray:
        return hash_keys(keys, self.hash, self.T)

    def successor_indices(self, positions) -> np.ndarray:
        """Index into ``points`` of the clockwise successor of each position."""
        if not self._owner_at:
            raise NoServers("ring has no servers")
        idx = np.searchsorted(self.points, np.asarray(positions, dtype=np.int64), side="left")
        idx[idx == len(self.points)] = 0
        return idx

    def owner_of_position(self, pos: int):
        return self.owners[int(self.successor_indices([pos])[0])]


def ch_assign(key, ring: CHRing):
    """Server owning the first virtual point clockwise from the key's hash."""
    return ring.owner_of_position(ring.key_position(key))


@dataclass(frozen=True)
class BoundedLoadPolicy:
    c: float = DEFAULT_BOUND_C

    def __post_init__(self):
        if not self.c > 1:
            raise ValidationError(f"capacity factor must exceed 1, got {self.c}")

    def capacity(self, m: int, n: int) -> int:
        if n < 1:
            raise NoServers("capacity undefined without servers")
        return max(1, math.ceil(self.c * m / n)) if m >= 1 else 0


def chbl_assign(key, ring: CHRing, policy: BoundedLoadPolicy, loads: dict, m: int):
    """Bounded-load assignment of one key; ``loads`` is updated in place.

    ``m`` is the total number of keys in the batch, which fixes the per-server
    capacity ``ceil(c * m / n)``.
    """
    start = int(ring.successor_indices([ring.key_position(key)])[0])
    cap = policy.capacity(m, len(ring.servers))
    return _spill_walk(start, ring.owners, loads, cap)


def _spill_walk(start, owners, loads, cap):
    n_points = len(owners)
    i = start
    for _ in range(n_points):
        server = owners[i]
        if loads.get(server, 0) < cap:
            loads[server] = loads.get(server, 0) + 1
            return server
        i += 1
        if i == n_points:
            i = 0
    raise CapacityExhausted(f"every server holds {cap} keys")


class CHBalancer:
    name = "ch"

    def __init__(self, ring: CHRing):
        self.ring = ring

    def assign_all(self, keys) -> list:
        return self.assign_positions(self.ring.key_positions(keys))

    def assign_positions(self, positions) -> list:
        owners = self.ring.owners
        return [owners[i] for i in self.ring.successor_indices(positions)]


class CHBLBalancer:
    """Assigns a batch of keys in order under the bounded-load capacity."""

    name = "chbl"

    def __init__(self, ring: CHRing, policy: BoundedLoadPolicy | None = None):
        self.ring = ring
        self.policy = policy or BoundedLoadPolicy()
        self.loads: dict = {}

    def assign_all(self, keys) -> list:
        return self.assign_positions(self.ring.key_positions(keys))

    def assign_positions(self, positions) -> list:
        m = len(positions) + sum(self.loads.values())
        cap = self.policy.capacity(m, len(self.ring.servers))
        idx = self.ring.successor_indices(positions)
        owners = self.ring.owners
        return [_spill_walk(int(i), owners, self.loads, cap) for i in idx]
