"""Level-synchronous pooled execution of the tree.

All nodes at the same level are mutually independent, so the schedule is just
the list of level sets from the leaves up.  Workers only change wall time:
node inputs are immutable and each node's arithmetic is identical to the
sequential run, so sigmas come out bit-for-bit equal for any worker count.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .hierarchy import HapodResult, LeafAssignment, NodeReport, ToleranceAssignment, _check_run_inputs, error_bound, evaluate_node
from .pod import PodBackend
from .tree import RootedTree, derive_maps

__all__ = ["Schedule", "ExecStats", "plan", "run_parallel", "critical_path_time", "peak_resident_modes"]


@dataclass(frozen=True)
class Schedule:
    """waves[l-1] holds the ids of every node at level l, ascending."""

    waves: tuple[tuple[int, ...], ...]


@dataclass(frozen=True, eq=False)
class ExecStats:
    wave_times: tuple[float, ...]
    node_times: dict[int, float]
    critical_path_time: float
    total_node_time: float
    peak_resident_modes: int


def plan(tree: RootedTree) -> Schedule:
    maps = derive_maps(tree)
    waves: list[list[int]] = [[] for _ in range(maps.depth)]
    for v in range(tree.node_count):
        waves[maps.level[v] - 1].append(v)
    return Schedule(tuple(tuple(w) for w in waves))


def critical_path_time(reports) -> float:
    """Sum over levels of the slowest node in that level: the wall time an
    unbounded pool could reach."""
    per_level: dict[int, float] = {}
    for r in reports:
        per_level[r.level] = max(per_level.get(r.level, 0.0), r.wall_time)
    return sum(per_level.values())


def peak_resident_modes(tree: RootedTree, reports) -> int:
    """Largest number of mode columns alive at once under the retention rule
    'a child's output is released when its parent completes', evaluated
    wave-synchronously."""
    count = {r.node: r.output_mode_count for r in reports}
    live = 0
    peak = 0
    held: dict[int, int] = {}
    for wave in plan(tree).waves:
        produced = sum(count.get(v, 0) for v in wave)
        peak = max(peak, live + produced)
        live += produced
        for v in wave:
            held[v] = count.get(v, 0)
        for v in wave:
            for c in tree.children[v]:
                live -= held.pop(c)
    return peak


def run_parallel(tree: RootedTree, leaves: LeafAssignment, tol: ToleranceAssignment,
                 backend: PodBackend | None = None, worker_count: int = 1,
                 track_right_factor: bool = False) -> tuple[HapodResult, ExecStats]:
    """Same result as run_hapod, executed wave by wave on a thread pool.

    The dense kernels drop the interpreter lock, so same-level nodes really do
    overlap.  If a node raises, the wave drains and the first failure (in node
    id order) propagates.
    """
    if worker_count < 1:
        raise ValueError("worker_count must be at least 1")
    backend = backend or PodBackend()
    maps = _check_run_inputs(tree, leaves, tol)
    schedule = plan(tree)

    live: dict[int, tuple] = {}
    reports: dict[int, NodeReport] = {}
    wave_times: list[float] = []
    with ThreadPoolExecutor(max_workers=worker_count) as pool:
        for wave in schedule.waves:
            started = time.perf_counter()
            futures = [
                (
                    v,
                    pool.submit(
                        evaluate_node, tree, maps, v, tol, backend, leaves,
                        [live[c] for c in tree.children[v]], track_right_factor,
                    ),
                )
                for v in wave
            ]
            failure = None
            done: dict[int, tuple] = {}
            for v, fut in futures:
                try:
                    done[v] = fut.result()
                except Exception as exc:  # keep draining, report the first
                    if failure is None:
                        failure = (v, exc)
            if failure is not None:
                raise RuntimeError(f"node {failure[0]} failed: {failure[1]}") from failure[1]
            for v, (out, lhat, rep) in done.items():
                live[v] = (out, lhat)
                reports[v] = rep
            for v in wave:
                for c in tree.children[v]:
                    del live[c]
            wave_times.append(time.perf_counter() - started)

    final, lhat_root = live[tree.root]
    result = HapodResult(
        modes=final,
        apriori_error_bound=error_bound(tree, tol, maps=maps),
        reports=tuple(reports[v] for v in sorted(reports)),
        root_node=tree.root,
        right_factor=lhat_root if track_right_factor else None,
    )
    ordered = result.reports
    stats = ExecStats(
        wave_times=tuple(wave_times),
        node_times={r.node: r.wall_time for r in ordered},
        critical_path_time=critical_path_time(ordered),
        total_node_time=float(sum(r.wall_time for r in ordered)),
        peak_resident_modes=peak_resident_modes(tree, ordered),
    )
    return result, stats
