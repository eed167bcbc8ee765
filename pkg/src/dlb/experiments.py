"""End-to-end experiments: hash skew, bin-load std comparison, cluster simulation."""

from __future__ import annotations

import math

import numpy as np

from .baselines import DEFAULT_BOUND_C, DEFAULT_VNODES, BoundedLoadPolicy, CHBalancer, CHBLBalancer, CHRing
from .datagen import DistributionSpec, generate
from .errors import ValidationError
from .hashing import HASHES, HashFn, hash_keys
from .metrics import compare_table, sorted_bin_counts, spread
from .model import HierConfig
from .ring import DEFAULT_RING_SIZE
from .servers import default_epsilon
from .sim import ClusterSpec, DLBBalancer, run_sim, summarize
from .trainer import train

BASELINE_KINDS = ("ch", "chbl")
ALL_METHODS = tuple(f"{kind}-{h}" for kind in BASELINE_KINDS for h in HASHES) + ("dlb",)


def server_names(n: int) -> list[str]:
    return [f"server-{i}" for i in range(n)]


def parse_method(name: str):
    """``"ch-murmur3"`` -> ``("ch", "murmur3")``; ``"dlb"`` -> ``("dlb", None)``."""
    if name == "dlb":
        return "dlb", None
    kind, _, hash_name = name.partition("-")
    if kind not in BASELINE_KINDS or hash_name not in HASHES:
        raise ValidationError(f"unknown method {name!r}; choose from {', '.join(ALL_METHODS)}")
    return kind, hash_name


def _loads(assigned, names) -> np.ndarray:
    index = {s: i for i, s in enumerate(names)}
    return np.bincount([index[s] for s in assigned], minlength=len(names))


def baseline_loads(kind, hash_name, positions, n_servers, vnodes=DEFAULT_VNODES, bound_c=DEFAULT_BOUND_C,
                   T=DEFAULT_RING_SIZE, salt="") -> np.ndarray:
    """Per-server key counts for CH / CHBL given precomputed key positions."""
    names = server_names(n_servers)
    ring = CHRing(names, vnodes=vnodes, hash_fn=HashFn(hash_name), T=T, salt=salt)
    balancer = CHBalancer(ring) if kind == "ch" else CHBLBalancer(ring, BoundedLoadPolicy(bound_c))
    return _loads(balancer.assign_positions(positions), names)


def dlb_loads(model, keys, n_servers, epsilon=None, bound_c=DEFAULT_BOUND_C) -> np.ndarray:
    if epsilon is None:
        epsilon = default_epsilon(len(keys), n_servers, bound_c)
    balancer = DLBBalancer.with_servers(model, n_servers, epsilon)
    return _loads(balancer.assign_all(keys), list(range(n_servers)))


def eval_balance(keys, methods=ALL_METHODS, model=None, n_servers=64, repeats=10, vnodes=DEFAULT_VNODES,
                 bound_c=DEFAULT_BOUND_C, epsilon=None, T=None):
    """Std of per-server loads for each method.

    Hash baselines are repeated with a different virtual-node salt each run;
    the learned balancer is deterministic and runs once. Returns
    ``(rows, loads)`` where ``loads[method]`` lists the per-run load vectors.
    """
    parsed = [(m, *parse_method(m)) for m in methods]
    if any(kind == "dlb" for _, kind, _ in parsed) and model is None:
        raise ValidationError("method 'dlb' needs a trained model")
    if T is None:
        T = model.config.T if model is not None else DEFAULT_RING_SIZE
    positions = {}
    loads = {}
    for name, kind, hash_name in parsed:
        if kind == "dlb":
            loads[name] = [dlb_loads(model, keys, n_servers, epsilon, bound_c)]
            continue
        if hash_name not in positions:
            positions[hash_name] = hash_keys(keys, hash_name, T)
        loads[name] = [baseline_loads(kind, hash_name, positions[hash_name], n_servers, vnodes, bound_c, T,
                                      salt=f"rep{r}/") for r in range(repeats)]
    reference = "dlb" if "dlb" in loads else parsed[0][0]
    return compare_table(loads, reference=reference), loads


def hash_bin_counts(keys, hash_name, n_bins, T=DEFAULT_RING_SIZE) -> np.ndarray:
    return sorted_bin_counts(keys, lambda k: hash_keys(k, hash_name, T), n_bins, T)


def fig1(count=10240, n_bins=32, seed=7, fanouts=(2, 2, 2, 2), T=DEFAULT_RING_SIZE, epochs=100, batch_size=256,
         with_model=True):
    """Sorted per-bin counts of normal keys under each hash and (optionally) a model trained on those keys."""
    keys = generate(DistributionSpec("normal", count=count, seed=seed))
    series = {h: hash_bin_counts(keys, h, n_bins, T) for h in HASHES}
    model = None
    if with_model:
        model, _ = train(keys, HierConfig(fanouts, T), epochs=epochs, batch_size=batch_size, seed=seed)
        series["dlb"] = sorted_bin_counts(keys, model.map_positions, n_bins, T)
    return series, model


def fig1_rows(series) -> list[dict]:
    rows = []
    for name, counts in series.items():
        for rank, count in enumerate(counts):
            rows.append({"series": name, "rank": rank, "count": int(count)})
    return rows


def spread_rows(series) -> list[dict]:
    return [{"series": name, "spread": spread(counts)} for name, counts in series.items()]


def sim_balancer(name, spec: ClusterSpec, model=None, vnodes=DEFAULT_VNODES, bound_c=DEFAULT_BOUND_C,
                 epsilon=None, T=DEFAULT_RING_SIZE):
    kind, hash_name = parse_method(name)
    if kind == "dlb":
        if model is None:
            raise ValidationError("balancer 'dlb' needs a trained model")
        if epsilon is None:
            epsilon = math.ceil(spec.num_jobs / spec.num_servers)
        return DLBBalancer.with_servers(model, spec.num_servers, epsilon)
    ring = CHRing(server_names(spec.num_servers), vnodes=vnodes, hash_fn=HashFn(hash_name), T=T)
    return CHBalancer(ring) if kind == "ch" else CHBLBalancer(ring, BoundedLoadPolicy(bound_c))


def compare_sim(keys, model, spec: ClusterSpec = ClusterSpec(), methods=ALL_METHODS, vnodes=DEFAULT_VNODES,
                bound_c=DEFAULT_BOUND_C, epsilon=None):
    """Simulate once per balancer; rows carry makespans and the learned balancer's reduction vs each."""
    T = model.config.T if model is not None else DEFAULT_RING_SIZE
    traces = {}
    for name in methods:
        balancer = sim_balancer(name, spec, model, vnodes, bound_c, epsilon, T)
        traces[name] = run_sim(spec, keys, balancer)
    summaries = {name: summarize(tr) for name, tr in traces.items()}
    dlb = summaries["dlb"]["makespan_s"] if "dlb" in summaries else float("nan")
    rows = []
    for name, s in summaries.items():
        ms = s["makespan_s"]
        rows.append({
            "balancer": name,
            "makespan_s": ms,
            "mean_finish_s": s["mean_finish_s"],
            "max_jobs_per_server": max(s["job_counts"].values()),
            "dlb_reduction_pct": 100.0 * (ms - dlb) / ms if ms > 0 else 0.0,
        })
    return rows, traces


def reduction_pct(dlb_makespan: float, other_makespan: float) -> float:
    return 100.0 * (other_makespan - dlb_makespan) / other_makespan


__all__ = [
    "ALL_METHODS", "eval_balance", "fig1", "fig1_rows", "compare_sim", "baseline_loads", "dlb_loads",
    "parse_method", "server_names", "spread_rows", "reduction_pct",
]
