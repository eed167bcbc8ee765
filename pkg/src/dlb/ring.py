"""Integer hash-circle arithmetic shared by every balancer."""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .errors import DuplicateServer, NoServers, ValidationError

DEFAULT_RING_SIZE = 2 ** 32


@dataclass(frozen=True)
class RingConfig:
    T: int = DEFAULT_RING_SIZE

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 2:
            raise ValidationError(f"ring size must be an integer >= 2, got {self.T}")


class Arc(NamedTuple):
    start: int
    length: int


def check_ring_size(T: int) -> int:
    return RingConfig(T).T


def wrap(pos: int, T: int) -> int:
    return pos % T


def clockwise_successor(pos: int, servers: Sequence[int]) -> int:
    """Smallest server position >= ``pos``, wrapping to the smallest overall.

    ``servers`` must be sorted ascending. A key sitting exactly on a server
    position belongs to that server.
    """
    if len(servers) == 0:
        raise NoServers("no servers on the ring")
    i = bisect.bisect_left(servers, pos)
    return servers[i] if i < len(servers) else servers[0]


def successor_index(pos: int, servers: Sequence[int]) -> int:
    """Index into ``servers`` of :func:`clockwise_successor`."""
    if len(servers) == 0:
        raise NoServers("no servers on the ring")
    i = bisect.bisect_left(servers, pos)
    return i if i < len(servers) else 0


def arcs_between(servers: Sequence[int], T: int) -> list[Arc]:
    """Arcs from each server to the next one clockwise; lengths sum to ``T``."""
    if len(servers) == 0:
        raise NoServers("no servers on the ring")
    ordered = sorted(servers)
    for a, b in zip(ordered, ordered[1:]):
        if a == b:
            raise DuplicateServer(f"two servers at position {a}")
    if len(ordered) == 1:
        return [Arc(ordered[0], T)]
    nxt = ordered[1:] + ordered[:1]
    return [Arc(p, (q - p) % T) for p, q in zip(ordered, nxt)]
