"""Discrete-event simulation of a batch of equal-length jobs on a cluster.

Every job is assigned to a server by a balancer at time zero. Each server
runs at most ``slots_per_server`` jobs at once and starts queued jobs in FIFO
order whenever a slot frees up. Events are processed in
``(time, server, job)`` order, so a run is fully deterministic.
"""

from __future__ import annotations

import csv
import heapq
import io
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ValidationError
from .servers import ServerTable, even_table


@dataclass(frozen=True)
class ClusterSpec:
    num_servers: int = 64
    slots_per_server: int = 4
    job_duration_s: float = 20.0
    num_jobs: int = 8192

    def __post_init__(self):
        if min(self.num_servers, self.slots_per_server, self.num_jobs) < 1 or not self.job_duration_s > 0:
            raise ValidationError(f"cluster parameters must be positive: {self}")

    @property
    def makespan_lower_bound(self) -> float:
        waves = math.ceil(self.num_jobs / (self.num_servers * self.slots_per_server))
        return waves * self.job_duration_s


class JobRecord(NamedTuple):
    job_id: int
    key: float
    server: object
    start_s: float
    finish_s: float


@dataclass
class SimTrace:
    spec: ClusterSpec
    records: list = field(default_factory=list)  # indexed by job id

    @property
    def makespan_s(self) -> float:
        return max((r.finish_s for r in self.records), default=0.0)


def run_sim(spec: ClusterSpec, keys, balancer) -> SimTrace:
    """Assign ``keys`` (one per job) with ``balancer.assign_all`` and play out the schedule."""
    if len(keys) != spec.num_jobs:
        raise ValidationError(f"{len(keys)} keys for {spec.num_jobs} jobs")
    servers = list(balancer.assign_all(keys))
    if len(servers) != spec.num_jobs:
        raise ValidationError("balancer returned the wrong number of assignments")
    distinct = set(servers)
    if len(distinct) > spec.num_servers:
        raise ValidationError(f"balancer used {len(distinct)} servers, cluster has {spec.num_servers}")

    queues: dict = {}
    for job, server in enumerate(servers):
        queues.setdefault(server, []).append(job)
    order = {s: i for i, s in enumerate(sorted(queues, key=_sort_key))}
    heads = {s: 0 for s in queues}
    start = [0.0] * spec.num_jobs
    finish = [0.0] * spec.num_jobs
    events = []

    def launch(server, now):
        q = queues[server]
        job = q[heads[server]]
        heads[server] += 1
        start[job] = now
        finish[job] = now + spec.job_duration_s
        heapq.heappush(events, (finish[job], order[server], job, server))

    for server, q in queues.items():
        for _ in range(min(spec.slots_per_server, len(q))):
            launch(server, 0.0)
    while events:
        now, _, _, server = heapq.heappop(events)
        if heads[server] < len(queues[server]):
            launch(server, now)

    records = [JobRecord(j, float(keys[j]), servers[j], start[j], finish[j]) for j in range(spec.num_jobs)]
    return SimTrace(spec, records)


def _sort_key(server):
    return (0, server, "") if isinstance(server, (int, np.integer)) else (1, 0, str(server))


def summarize(trace: SimTrace) -> dict:
    counts: dict = {}
    server_makespan: dict = {}
    for r in trace.records:
        counts[r.server] = counts.get(r.server, 0) + 1
        server_makespan[r.server] = max(server_makespan.get(r.server, 0.0), r.finish_s)
    finishes = [r.finish_s for r in trace.records]
    return {
        "makespan_s": trace.makespan_s,
        "mean_finish_s": float(np.mean(finishes)) if finishes else 0.0,
        "job_counts": dict(sorted(counts.items(), key=lambda kv: _sort_key(kv[0]))),
        "server_makespan_s": dict(sorted(server_makespan.items(), key=lambda kv: _sort_key(kv[0]))),
        "csv": trace_csv(trace),
    }


def trace_csv(trace: SimTrace) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["job_id", "server", "start_s", "finish_s"])
    for r in sorted(trace.records, key=lambda r: r.job_id):
        writer.writerow([r.job_id, r.server, repr(r.start_s), repr(r.finish_s)])
    return buf.getvalue()


def max_occupancy(trace: SimTrace) -> dict:
    """Peak number of simultaneously running jobs per server, rebuilt from the trace."""
    per_server: dict = {}
    for r in trace.records:
        per_server.setdefault(r.server, []).extend(((r.start_s, 1), (r.finish_s, -1)))
    peaks = {}
    for server, events in per_server.items():
        running = peak = 0
        # finishes sort before starts at the same instant
        for _, delta in sorted(events, key=lambda e: (e[0], e[1])):
            running += delta
            peak = max(peak, running)
        peaks[server] = peak
    return peaks


def idle_violations(trace: SimTrace) -> int:
    """Number of (server, interval) pairs where a job waited while a slot was free.

    All jobs arrive at time zero, so a job is waiting on ``[0, start_s)``.
    """
    slots = trace.spec.slots_per_server
    by_server: dict = {}
    for r in trace.records:
        by_server.setdefault(r.server, []).append(r)
    violations = 0
    for records in by_server.values():
        starts = np.array([r.start_s for r in records])
        finishes = np.array([r.finish_s for r in records])
        for p in np.unique(np.concatenate([starts, finishes])):
            running = np.count_nonzero((starts <= p) & (p < finishes))
            waiting = np.count_nonzero(starts > p)
            if waiting and running < slots:
                violations += 1
    return violations


class RoundRobinBalancer:
    """Perfectly even oracle: job ``i`` goes to server ``i mod n``."""

    name = "round-robin"

    def __init__(self, num_servers: int):
        self.num_servers = num_servers

    def assign_all(self, keys) -> list:
        return [i % self.num_servers for i in range(len(keys))]


class DLBBalancer:
    """Learned positions plus the deterministic server table with its load threshold."""

    name = "dlb"

    def __init__(self, model, table: ServerTable):
        self.model = model
        self.table = table

    @classmethod
    def with_servers(cls, model, num_servers: int, epsilon=math.inf):
        return cls(model, even_table(num_servers, epsilon, model.config.T))

    def assign_all(self, keys) -> list:
        return self.assign_positions(self.model.map_positions(keys))

    def assign_positions(self, positions) -> list:
        return self.table.assign_many(positions)
