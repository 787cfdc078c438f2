"""Hierarchical POD over a rooted tree of small PODs.

Leaves hold blocks of raw snapshots; each interior node runs a POD on the
concatenation of its children's singular-value-scaled modes.  Two facts make
this useful: the total squared projection error of the final modes against
the original snapshots is at most the sum of the squared per-node tolerances,
and the mode count at any node never exceeds what one flat POD of all
subordinate snapshots at that node's tolerance would return.  With the
tolerance rule implemented by `assign_tolerances`, a single scalar target
controls the final mean error, and ``omega`` trades final basis size against
the size of the intermediate decompositions.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .pod import InnerProductSpace, ModeSet, PodBackend, SnapshotBlock, block_gramian_pod, pod
from .tree import RootedTree, TreeMaps, build_chain, derive_maps

__all__ = [
    "SessionError",
    "ToleranceAssignment",
    "LeafAssignment",
    "NodeReport",
    "HapodResult",
    "assign_tolerances",
    "distribute_columns",
    "error_bound",
    "actual_mean_error",
    "run_hapod",
    "IncrementalSession",
    "incremental_open",
    "incremental_push",
    "incremental_finalize",
]


class SessionError(RuntimeError):
    """Incremental session used out of order (push after finalize, too many pushes...)."""


@dataclass(frozen=True, eq=False)
class ToleranceAssignment:
    """One nonnegative truncation tolerance per node id.

    omega and target are metadata recording how the values were derived; they
    stay None for hand-built assignments.
    """

    epsilons: tuple[float, ...]
    omega: float | None = None
    target: float | None = None

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        if any(not math.isfinite(e) or e < 0.0 for e in eps):
            raise ValueError("tolerances must be finite and nonnegative")
        object.__setattr__(self, "epsilons", eps)
        if self.omega is not None and not (0.0 <= self.omega <= 1.0):
            raise ValueError(f"omega must lie in [0, 1], got {self.omega}")
        if self.target is not None and self.target < 0.0:
            raise ValueError("target must be nonnegative")

    def for_node(self, node: int) -> float:
        return self.epsilons[node]


@dataclass(frozen=True, eq=False)
class LeafAssignment:
    """leaf id -> snapshot block, all blocks living in one shared space."""

    blocks: dict[int, SnapshotBlock]

    def __post_init__(self):
        if not self.blocks:
            raise ValueError("leaf assignment is empty")
        object.__setattr__(self, "blocks", dict(self.blocks))
        spaces = list(self.blocks.values())
        for b in spaces[1:]:
            if not b.space.same_as(spaces[0].space):
                raise ValueError("all leaf blocks must share one inner-product space")

    @property
    def space(self) -> InnerProductSpace:
        return next(iter(self.blocks.values())).space

    def counts(self) -> dict[int, int]:
        return {v: b.count for v, b in self.blocks.items()}

    @property
    def total_count(self) -> int:
        return sum(b.count for b in self.blocks.values())


@dataclass(frozen=True)
class NodeReport:
    node: int
    level: int
    is_leaf: bool
    input_count: int
    subordinate_count: int
    local_epsilon: float
    output_mode_count: int
    discarded_tail_energy: float
    wall_time: float


@dataclass(frozen=True, eq=False)
class HapodResult:
    modes: ModeSet
    apriori_error_bound: float
    reports: tuple[NodeReport, ...]
    root_node: int
    right_factor: np.ndarray | None = None

    @property
    def mode_count(self) -> int:
        return self.modes.count

    def report_for(self, node: int) -> NodeReport:
        for r in self.reports:
            if r.node == node:
                return r
        raise KeyError(f"no report for node {node}")

    def max_intermediate_modes(self, include_leaves: bool = False) -> int:
        """Largest output mode count over the non-root nodes."""
        counts = [
            r.output_mode_count
            for r in self.reports
            if r.node != self.root_node and (include_leaves or not r.is_leaf)
        ]
        return max(counts, default=0)


def distribute_columns(tree: RootedTree, block: SnapshotBlock, counts=None,
                       block_size: int | None = None, maps: TreeMaps | None = None) -> LeafAssignment:
    """Slice a snapshot matrix across the tree's leaves, in depth-first leaf order.

    Exactly one of counts / block_size may be given; with neither, the columns
    are split as evenly as possible.  block_size cuts consecutive chunks of
    that many columns (the last one shorter) and requires the tree to have
    exactly the resulting number of leaves.
    """
    maps = maps if maps is not None else derive_maps(tree)
    order = maps.leaf_order
    k = len(order)
    m = block.count
    if counts is not None and block_size is not None:
        raise ValueError("pass either counts or block_size, not both")
    if counts is None:
        if block_size is not None:
            if block_size < 1:
                raise ValueError("block_size must be positive")
            full = m // block_size
            counts = [block_size] * full
            if m - full * block_size:
                counts.append(m - full * block_size)
            if not counts:
                counts = [0]
        else:
            base, extra = divmod(m, k)
            counts = [base + 1] * extra + [base] * (k - extra)
    counts = [int(c) for c in counts]
    if len(counts) != k:
        raise ValueError(f"{len(counts)} blocks for {k} leaves")
    if any(c < 0 for c in counts) or sum(counts) != m:
        raise ValueError(f"block sizes {counts} do not partition {m} columns")
    blocks = {}
    at = 0
    for leaf, c in zip(order, counts):
        blocks[leaf] = SnapshotBlock(block.space, block.values[:, at : at + c])
        at += c
    return LeafAssignment(blocks)


def assign_tolerances(tree: RootedTree, leaf_counts, target: float, omega: float = 0.75,
                      zero_leaf_tolerance: bool = False, maps: TreeMaps | None = None) -> ToleranceAssignment:
    """Per-node tolerances that certify a mean squared projection error <= target**2.

    The root receives sqrt(total) * omega * target; every other node alpha
    receives sqrt(count below alpha) * sqrt(1 - omega**2) / sqrt(depth - 1) *
    target.  omega near 1 shrinks the final basis at the price of fatter
    intermediate PODs, omega near 0 the reverse.  zero_leaf_tolerance switches
    the leaves to epsilon = 0 (pure passthrough), the usual choice for
    incremental processing where leaf blocks are raw data anyway.

    leaf_counts may be a LeafAssignment or a mapping leaf id -> column count.
    """
    if isinstance(leaf_counts, LeafAssignment):
        leaf_counts = leaf_counts.counts()
    if target <= 0.0:
        raise ValueError("target must be positive")
    if not (0.0 <= omega <= 1.0):
        raise ValueError(f"omega must lie in [0, 1], got {omega}")
    maps = maps if maps is not None else derive_maps(tree, leaf_counts)
    if maps.subordinate_leaf_counts is None:
        maps = derive_maps(tree, leaf_counts)
    total = maps.subordinate_leaf_counts[tree.root]
    if total == 0:
        raise ValueError("no snapshots anywhere in the tree")
    if maps.depth < 2 and omega < 1.0:
        raise ValueError(
            "a depth-1 tree leaves no non-root budget to spend; use omega = 1 or a deeper tree"
        )
    eps = [0.0] * tree.node_count
    eps[tree.root] = math.sqrt(total) * omega * target
    if maps.depth >= 2:
        spread = math.sqrt(1.0 - omega * omega) / math.sqrt(maps.depth - 1)
        for v in range(tree.node_count):
            if v == tree.root:
                continue
            if zero_leaf_tolerance and not tree.children[v]:
                eps[v] = 0.0
            else:
                eps[v] = math.sqrt(maps.subordinate_leaf_counts[v]) * spread * target
    return ToleranceAssignment(tuple(eps), omega=omega, target=target)


def error_bound(tree: RootedTree, tol: ToleranceAssignment, node: int | None = None,
                maps: TreeMaps | None = None) -> float:
    """A-priori bound sqrt(sum of epsilon**2 over the subtree) on the total
    squared projection error of the node's output against its subordinate
    snapshots."""
    if len(tol.epsilons) != tree.node_count:
        raise ValueError("tolerance map does not cover the tree")
    maps = maps if maps is not None else derive_maps(tree)
    v = tree.root if node is None else node
    return math.sqrt(sum(tol.epsilons[u] ** 2 for u in maps.subtree_nodes[v]))


def actual_mean_error(snapshots: SnapshotBlock, modes: ModeSet) -> float:
    """Measured (1/m) * sum_j ||s_j - P s_j||^2 with P the orthogonal projection
    onto the span of the modes.  Computed from explicit residuals."""
    if not modes.orthonormal:
        raise ValueError("projection needs orthonormal modes (got a passthrough set)")
    if not snapshots.space.same_as(modes.space):
        raise ValueError("snapshots and modes live in different spaces")
    m = snapshots.count
    if m == 0:
        return 0.0
    values = snapshots.values
    if modes.count:
        coeff = modes.space.gram(modes.modes, values)
        resid = values - modes.modes @ coeff
    else:
        resid = values
    return float(np.sum(snapshots.space.norms_sq(resid))) / m


def _stacked_diag(mats: list[np.ndarray]) -> np.ndarray:
    rows = sum(a.shape[0] for a in mats)
    cols = sum(a.shape[1] for a in mats)
    out = np.zeros((rows, cols))
    r = c = 0
    for a in mats:
        out[r : r + a.shape[0], c : c + a.shape[1]] = a
        r += a.shape[0]
        c += a.shape[1]
    return out


def evaluate_node(tree: RootedTree, maps: TreeMaps, node: int, tol: ToleranceAssignment,
                  backend: PodBackend, leaves: LeafAssignment, child_results, track: bool):
    """POD step for one node given its children's outputs.

    child_results is a list of (ModeSet, cumulative right factor or None) in
    child-list order.  Returns (ModeSet, cumulative right factor or None,
    NodeReport).  Shared by the sequential and the pooled runners.
    """
    eps = tol.epsilons[node]
    space = leaves.space
    started = time.perf_counter()
    if not tree.children[node]:
        block = leaves.blocks[node]
        out = pod(block, eps, backend, want_right=track)
        lhat = out.right if track else None
        input_count = block.count
    else:
        input_count = sum(ms.count for ms, _ in child_results)
        parts = [ms.scaled() for ms, _ in child_results if ms.count]
        if parts:
            stacked = np.hstack(parts) if len(parts) > 1 else parts[0]
        else:
            stacked = np.zeros((space.dimension, 0))
        out = pod(SnapshotBlock(space, stacked), eps, backend, want_right=track)
        lhat = None
        if track:
            carried = _stacked_diag([lh for _, lh in child_results])
            lhat = carried @ out.right
    wall = time.perf_counter() - started
    report = NodeReport(
        node=node,
        level=maps.level[node],
        is_leaf=not tree.children[node],
        input_count=input_count,
        subordinate_count=maps.subordinate_leaf_counts[node],
        local_epsilon=eps,
        output_mode_count=out.count,
        discarded_tail_energy=out.tail_energy,
        wall_time=wall,
    )
    return out, lhat, report


def _check_run_inputs(tree, leaves, tol):
    maps = derive_maps(tree, leaves.counts())
    extra = set(leaves.blocks) - set(maps.leaves)
    if extra:
        raise ValueError(f"assignment names node {min(extra)} which is not a leaf")
    if len(tol.epsilons) != tree.node_count:
        raise ValueError(
            f"tolerance map covers {len(tol.epsilons)} nodes but the tree has {tree.node_count}"
        )
    return maps


def run_hapod(tree: RootedTree, leaves: LeafAssignment, tol: ToleranceAssignment,
              backend: PodBackend | None = None, track_right_factor: bool = False) -> HapodResult:
    """Evaluate the whole tree bottom-up, children in child-list order.

    Child outputs are released as soon as their parent has consumed them, so
    the resident working set tracks one antichain of the tree rather than the
    full snapshot set.  With track_right_factor=True the result also carries
    the cumulative right factor: an (total snapshots) x (mode count) matrix
    with orthonormal columns relating the final scaled modes back to the
    original snapshots (rows in depth-first leaf order).
    """
    backend = backend or PodBackend()
    maps = _check_run_inputs(tree, leaves, tol)

    # post-order walk so children are ready before their parent
    post: list[int] = []
    stack: list[tuple[int, bool]] = [(tree.root, False)]
    while stack:
        v, expanded = stack.pop()
        if expanded:
            post.append(v)
        else:
            stack.append((v, True))
            for c in reversed(tree.children[v]):
                stack.append((c, False))

    live: dict[int, tuple[ModeSet, np.ndarray | None]] = {}
    reports: dict[int, NodeReport] = {}
    for v in post:
        kids = tree.children[v]
        child_results = [live[c] for c in kids]
        out, lhat, rep = evaluate_node(tree, maps, v, tol, backend, leaves, child_results, track_right_factor)
        for c in kids:
            del live[c]
        live[v] = (out, lhat)
        reports[v] = rep

    final, lhat_root = live[tree.root]
    return HapodResult(
        modes=final,
        apriori_error_bound=error_bound(tree, tol, maps=maps),
        reports=tuple(reports[v] for v in sorted(reports)),
        root_node=tree.root,
        right_factor=lhat_root if track_right_factor else None,
    )


class IncrementalSession:
    """Single-pass chain compression: push blocks one at a time, finalize once.

    Equivalent to run_hapod over build_chain(planned_block_count) with leaf
    tolerances zero and the merge/root tolerances of `assign_tolerances`, but
    never holds more than the current modes plus one fresh block, and each
    merge fills the known diagonal part of its Gramian instead of recomputing
    inner products among the carried modes.

    The planned block count is part of the tolerance rule (the per-merge
    budget divides by sqrt(planned - 1)), so it must be fixed up front.
    Pushing fewer blocks than planned is allowed; finalize then applies the
    root-tolerance POD to whatever has accumulated.  Pushing more raises
    SessionError.
    """

    def __init__(self, target: float, omega: float, planned_block_count: int,
                 backend: PodBackend | None = None):
        if target <= 0.0:
            raise ValueError("target must be positive")
        if not (0.0 <= omega <= 1.0):
            raise ValueError(f"omega must lie in [0, 1], got {omega}")
        if planned_block_count < 1:
            raise ValueError("planned_block_count must be at least 1")
        self.target = float(target)
        self.omega = float(omega)
        self.planned = int(planned_block_count)
        self.backend = backend or PodBackend()
        self.tree = build_chain(self.planned)
        self.maps = derive_maps(self.tree)
        self._pushed = 0
        self._seen = 0
        self._current: ModeSet | None = None
        self._space: InnerProductSpace | None = None
        self._reports: list[NodeReport] = []
        self._eps_sq = 0.0
        self._done = False

    def _merge_epsilon(self, step: int) -> float:
        # step is 1-based; the last planned step is the root
        if step == self.planned:
            return math.sqrt(self._seen) * self.omega * self.target
        return (
            math.sqrt(self._seen)
            * math.sqrt(1.0 - self.omega * self.omega)
            / math.sqrt(self.planned - 1)
            * self.target
        )

    def _merge(self, fresh: SnapshotBlock, eps: float) -> ModeSet:
        if self._current is None:
            return pod(fresh, eps, self.backend)
        if self._current.orthonormal:
            return block_gramian_pod(self._current, fresh, eps,
                                     cutoff_factor=self.backend.gram_eig_cutoff_factor)
        joined = np.hstack([self._current.scaled(), fresh.values])
        return pod(SnapshotBlock(fresh.space, joined), eps, self.backend)

    def _leaf_report(self, leaf: int, count: int, wall: float) -> NodeReport:
        return NodeReport(
            node=leaf,
            level=self.maps.level[leaf],
            is_leaf=True,
            input_count=count,
            subordinate_count=count,
            local_epsilon=0.0,
            output_mode_count=count,
            discarded_tail_energy=0.0,
            wall_time=wall,
        )

    def _merge_report(self, node: int, input_count: int, eps: float,
                      out: ModeSet, wall: float) -> NodeReport:
        return NodeReport(
            node=node,
            level=self.maps.level[node],
            is_leaf=not self.tree.children[node],
            input_count=input_count,
            subordinate_count=self._seen,
            local_epsilon=eps,
            output_mode_count=out.count,
            discarded_tail_energy=out.tail_energy,
            wall_time=wall,
        )

    def push(self, block: SnapshotBlock) -> None:
        if self._done:
            raise SessionError("session already finalized")
        if self._pushed >= self.planned:
            raise SessionError(f"planned_block_count={self.planned} blocks already pushed")
        if self._space is None:
            self._space = block.space
        elif not self._space.same_as(block.space):
            raise ValueError("pushed block lives in a different space than the first one")
        step = self._pushed + 1
        prior_count = self._current.count if self._current is not None else 0
        self._seen += block.count
        leaf = self.maps.leaf_order[step - 1]
        if step == 1 and self.planned > 1:
            # bottom leaf: no POD, the raw block is carried as unit-sigma modes
            started = time.perf_counter()
            self._current = pod(block, 0.0, self.backend)
            self._reports.append(self._leaf_report(leaf, block.count, time.perf_counter() - started))
        else:
            eps = self._merge_epsilon(step)
            started = time.perf_counter()
            merged = self._merge(block, eps)
            wall = time.perf_counter() - started
            if self.planned > 1:
                self._reports.append(self._leaf_report(leaf, block.count, 0.0))
            node = leaf if self.planned == 1 else self.maps.parent[leaf]
            self._eps_sq += eps * eps
            self._current = merged
            self._reports.append(self._merge_report(node, prior_count + block.count, eps, merged, wall))
        self._pushed += 1

    def finalize(self) -> HapodResult:
        if self._done:
            raise SessionError("session already finalized")
        if self._pushed == 0:
            raise SessionError("no blocks were pushed")
        self._done = True
        if self._pushed < self.planned:
            # close out early: one root-tolerance POD over what accumulated
            eps = math.sqrt(self._seen) * self.omega * self.target
            prior_count = self._current.count if self._current is not None else 0
            started = time.perf_counter()
            empty = SnapshotBlock(self._space, np.zeros((self._space.dimension, 0)))
            final = self._merge(empty, eps)
            wall = time.perf_counter() - started
            self._eps_sq += eps * eps
            self._current = final
            self._reports.append(self._merge_report(self.tree.root, prior_count, eps, final, wall))
        return HapodResult(
            modes=self._current,
            apriori_error_bound=math.sqrt(self._eps_sq),
            reports=tuple(self._reports),
            root_node=self.tree.root,
            right_factor=None,
        )


def incremental_open(target: float, omega: float, planned_block_count: int,
                     backend: PodBackend | None = None) -> IncrementalSession:
    return IncrementalSession(target, omega, planned_block_count, backend)


def incremental_push(session: IncrementalSession, block: SnapshotBlock) -> None:
    session.push(block)


def incremental_finalize(session: IncrementalSession) -> HapodResult:
    return session.finalize()
