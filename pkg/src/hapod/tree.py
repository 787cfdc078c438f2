"""Rooted trees over dense integer node ids.

Nodes are 0..n-1, every node carries an ordered child list, leaves are the
childless nodes.  Levels count from the leaves up: a leaf sits at level 1 and
the depth of the tree is the level of the root.  Child-list order is
semantically meaningful downstream (it fixes concatenation order), so it is
preserved everywhere, including through the text serialization.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

__all__ = [
    "RootedTree",
    "TreeMaps",
    "validate",
    "derive_maps",
    "build_star",
    "build_chain",
    "build_balanced",
    "format_tree_text",
    "parse_tree_text",
]


@dataclass(frozen=True, eq=False)
class RootedTree:
    children: tuple[tuple[int, ...], ...]
    root: int

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(tuple(int(c) for c in kids) for kids in self.children))
        object.__setattr__(self, "root", int(self.root))

    @property
    def node_count(self) -> int:
        return len(self.children)


@dataclass(frozen=True, eq=False)
class TreeMaps:
    """Derived per-node structure: levels, leaves, subtrees, parents.

    ``leaf_order`` lists the leaves in depth-first order following the child
    lists; that order is the canonical one for attaching data blocks and for
    the row order of tracked snapshot coefficients.
    ``subordinate_leaf_counts`` is only present when leaf block sizes were
    supplied to derive_maps.
    """

    leaves: tuple[int, ...]
    leaf_order: tuple[int, ...]
    level: tuple[int, ...]
    depth: int
    parent: tuple[int, ...]
    subtree_nodes: tuple[tuple[int, ...], ...]
    subordinate_leaf_counts: tuple[int, ...] | None = None


def validate(tree: RootedTree) -> str | None:
    """None if the tree is well formed, else a message naming the broken
    condition and a witness node."""
    n = tree.node_count
    if n == 0:
        return "tree has no nodes"
    if not (0 <= tree.root < n):
        return f"root id {tree.root} out of range"
    parent = [-1] * n
    for v, kids in enumerate(tree.children):
        for c in kids:
            if not (0 <= c < n):
                return f"node {v} lists child {c} outside 0..{n - 1}"
            if parent[c] != -1 or (c == v):
                return f"node {c} has more than one parent (child lists must be disjoint)"
            parent[c] = v
    if parent[tree.root] != -1:
        return f"root {tree.root} appears as a child of node {parent[tree.root]}"
    # reachability from the root
    seen = [False] * n
    stack = [tree.root]
    seen[tree.root] = True
    while stack:
        v = stack.pop()
        for c in tree.children[v]:
            if not seen[c]:
                seen[c] = True
                stack.append(c)
    for v, ok in enumerate(seen):
        if not ok:
            return f"node {v} is not reachable from the root"
    return None


def derive_maps(tree: RootedTree, leaf_counts=None) -> TreeMaps:
    """Levels, leaves, parents and subtree node lists for a valid tree.

    leaf_counts, if given, maps leaf id -> number of snapshots attached there;
    the per-node totals over each subtree are then filled in as
    subordinate_leaf_counts.
    """
    problem = validate(tree)
    if problem is not None:
        raise ValueError(f"invalid tree: {problem}")
    n = tree.node_count
    parent = [-1] * n
    for v, kids in enumerate(tree.children):
        for c in kids:
            parent[c] = v

    # iterative post-order from the root
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

    level = [0] * n
    subtree: list[tuple[int, ...]] = [()] * n
    for v in post:
        kids = tree.children[v]
        level[v] = 1 + max((level[c] for c in kids), default=0)
        own: list[int] = [v]
        for c in kids:
            own.extend(subtree[c])
        subtree[v] = tuple(own)

    leaves = tuple(v for v in range(n) if not tree.children[v])
    # depth-first leaf order following child lists
    order: list[int] = []
    stack2 = [tree.root]
    while stack2:
        v = stack2.pop()
        if not tree.children[v]:
            order.append(v)
        else:
            for c in reversed(tree.children[v]):
                stack2.append(c)

    sub_counts = None
    if leaf_counts is not None:
        missing = [v for v in leaves if v not in leaf_counts]
        if missing:
            raise ValueError(f"leaf_counts missing leaf {missing[0]}")
        per_node = [0] * n
        for v in post:
            if not tree.children[v]:
                c = int(leaf_counts[v])
                if c < 0:
                    raise ValueError(f"negative snapshot count at leaf {v}")
                per_node[v] = c
            else:
                per_node[v] = sum(per_node[c] for c in tree.children[v])
        sub_counts = tuple(per_node)

    return TreeMaps(
        leaves=leaves,
        leaf_order=tuple(order),
        level=tuple(level),
        depth=level[tree.root],
        parent=tuple(parent),
        subtree_nodes=tuple(subtree),
        subordinate_leaf_counts=sub_counts,
    )


def build_star(num_leaves: int) -> RootedTree:
    """Root 0 with num_leaves children; the distributed one-shot topology."""
    if num_leaves < 1:
        raise ValueError("a star needs at least one leaf")
    children = [tuple(range(1, num_leaves + 1))] + [()] * num_leaves
    return RootedTree(tuple(children), 0)


def build_chain(num_blocks: int) -> RootedTree:
    """The incremental topology: a spine of merge nodes, one fresh leaf per step.

    Merge node l has children [merge l-1, fresh leaf l-1], the root is the
    last merge, and the first block's leaf is the bottom of the spine.  Depth
    equals num_blocks and there are exactly num_blocks leaves.
    """
    if num_blocks < 1:
        raise ValueError("a chain needs at least one block")
    if num_blocks == 1:
        return RootedTree(((),), 0)
    # ids go root-down in pairs: root 0, then (merge, fresh-leaf) = (2j-1, 2j);
    # the bottom merge's first child is the leaf holding block 1
    children: list[tuple[int, ...]] = [()] * (2 * num_blocks - 1)
    for j in range(num_blocks - 1):
        v = 0 if j == 0 else 2 * j - 1
        children[v] = (2 * j + 1, 2 * j + 2)
    return RootedTree(tuple(children), 0)


def build_balanced(num_blocks: int, depth: int) -> RootedTree:
    """Balanced n-ary tree with num_blocks leaves and `depth` branching levels.

    The arity is the smallest n with n**depth >= num_blocks; the full tree is
    then pruned from the right until exactly num_blocks leaves remain and any
    interior node left with a single child is spliced out (the root always
    stays).  Node ids are breadth-first, parent before child.
    """
    if depth < 2:
        raise ValueError("balanced trees need depth >= 2; use a star or a single node instead")
    if num_blocks < 1:
        raise ValueError("need at least one block")
    n = 1
    while n**depth < num_blocks:
        n += 1

    # full n-ary tree, BFS ids; level index 0 is the root layer
    layer_start = [0]
    for i in range(depth):
        layer_start.append(layer_start[-1] + n**i)
    total = layer_start[-1] + n**depth
    full_children: list[list[int]] = [[] for _ in range(total)]
    for i in range(depth):
        for j in range(n**i):
            v = layer_start[i] + j
            base = layer_start[i + 1] + j * n
            full_children[v] = list(range(base, base + n))
    full_leaves = list(range(layer_start[depth], total))
    kept_leaves = set(full_leaves[:num_blocks])

    # rebuild top-down, dropping pruned leaves, cascading empty interiors and
    # collapsing single-child interiors (never the root); recursion depth is
    # the tree depth, which is tiny
    def rebuild(v: int, is_root: bool):
        if not full_children[v]:
            return v if v in kept_leaves else None
        kept = [rebuild(c, False) for c in full_children[v]]
        kept = [k for k in kept if k is not None]
        if not kept:
            return None
        if len(kept) == 1 and not is_root:
            return kept[0]
        return (v, kept)

    built = rebuild(0, True)
    if built is None:
        raise ValueError("pruning removed every leaf")

    # renumber breadth-first so ids stay dense and parent-before-child
    new_children: list[tuple[int, ...]] = []
    ids = {id(built): 0}
    flat: list = [built]
    queue = deque([built])
    while queue:
        node = queue.popleft()
        if isinstance(node, tuple):
            for c in node[1]:
                ids[id(c)] = len(flat)
                flat.append(c)
                queue.append(c)
    for node in flat:
        if isinstance(node, tuple):
            new_children.append(tuple(ids[id(c)] for c in node[1]))
        else:
            new_children.append(())
    return RootedTree(tuple(new_children), 0)


def format_tree_text(tree: RootedTree) -> str:
    """One line per node, ``<id> <child-id>*``, root first, parent before child."""
    problem = validate(tree)
    if problem is not None:
        raise ValueError(f"refusing to serialize an invalid tree: {problem}")
    lines = []
    queue = deque([tree.root])
    seen = {tree.root}
    while queue:
        v = queue.popleft()
        lines.append(" ".join(str(x) for x in (v, *tree.children[v])))
        for c in tree.children[v]:
            if c not in seen:
                seen.add(c)
                queue.append(c)
    return "\n".join(lines) + "\n"


def parse_tree_text(text: str) -> RootedTree:
    """Inverse of format_tree_text; the first line's id is the root."""
    rows = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            nums = [int(tok) for tok in line.split()]
        except ValueError as exc:
            raise ValueError(f"line {ln}: {exc}") from None
        rows.append((nums[0], nums[1:]))
    if not rows:
        raise ValueError("empty tree description")
    n = len(rows)
    seen_ids = sorted(v for v, _ in rows)
    if seen_ids != list(range(n)):
        raise ValueError(f"node ids must be exactly 0..{n - 1}, each once; got {seen_ids}")
    children: list[tuple[int, ...]] = [()] * n
    for v, kids in rows:
        children[v] = tuple(kids)
    tree = RootedTree(tuple(children), rows[0][0])
    problem = validate(tree)
    if problem is not None:
        raise ValueError(f"invalid tree: {problem}")
    return tree
