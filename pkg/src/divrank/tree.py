"""Rooted document trees with an exponentially decaying ultrametric.

Documents are the leaves of a finite rooted tree. The distance between two
distinct nodes is ``c * epsilon ** depth(lca)``, so the root subtree has
diameter ``c`` and deeper subtrees are exponentially narrower. Trees are
immutable after construction and safe to share across concurrent runs; all
randomness is caller-supplied.

Every tree also carries per-edge weights (default: the width of the parent
subtree), which induce the weighted shortest-path metric used when validating
generative user models.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from . import _kernels


class DocTree:
    """A rooted tree over dense integer node ids.

    Attributes
    ----------
    parent : int32[n]    parent id, -1 at the root
    depth : int32[n]     edges from the root
    epsilon : float      metric base, in (0, 1)
    c : float            metric scale
    leaf_ids : int32[L]  ids of all leaves, ascending
    edge_weight : float64[n]  weight of the edge into each node (0 at root)
    """

    def __init__(self, parent, epsilon, c=1.0, edge_weights=None):
        parent = np.asarray(parent, dtype=np.int32)
        if parent.ndim != 1 or parent.size == 0:
            raise ValueError("parent must be a non-empty 1-d array")
        if not (0.0 < epsilon < 1.0):
            raise ValueError(f"epsilon must lie in (0,1), got {epsilon}")
        if not c > 0.0:
            raise ValueError(f"scale c must be positive, got {c}")

        n = parent.size
        roots = np.flatnonzero(parent < 0)
        if roots.size != 1:
            raise ValueError(f"expected exactly one root, found {roots.size}")
        self.root = int(roots[0])
        if (parent[parent >= 0] >= n).any():
            raise ValueError("parent id out of range")

        self.parent = parent
        self.epsilon = float(epsilon)
        self.c = float(c)
        self.n_nodes = n

        # children in CSR form, sorted by id for deterministic tie-breaking
        counts = np.bincount(parent[parent >= 0], minlength=n)
        self.child_start = np.zeros(n + 1, dtype=np.int32)
        np.cumsum(counts, out=self.child_start[1:])
        self.child_list = np.empty(max(n - 1, 0), dtype=np.int32)
        cursor = self.child_start[:-1].copy()
        for v in range(n):
            p = parent[v]
            if p >= 0:
                self.child_list[cursor[p]] = v
                cursor[p] += 1

        # depths via BFS; also detects unreachable nodes / cycles
        depth = np.full(n, -1, dtype=np.int32)
        depth[self.root] = 0
        order = np.empty(n, dtype=np.int32)
        order[0] = self.root
        head, tail = 0, 1
        while head < tail:
            v = order[head]
            head += 1
            for u in self.child_list[self.child_start[v]:self.child_start[v + 1]]:
                depth[u] = depth[v] + 1
                order[tail] = u
                tail += 1
        if tail != n:
            raise ValueError("tree is not connected (orphan nodes or a cycle)")
        self.depth = depth
        self.bfs_order = order
        self.height = int(depth.max())

        level_counts = np.bincount(depth, minlength=self.height + 1)
        self.level_start = np.zeros(self.height + 2, dtype=np.int64)
        np.cumsum(level_counts, out=self.level_start[1:])

        self.is_leaf = counts == 0
        self.leaf_ids = np.flatnonzero(self.is_leaf).astype(np.int32)
        self.leaf_index = np.full(n, -1, dtype=np.int32)
        self.leaf_index[self.leaf_ids] = np.arange(self.leaf_ids.size, dtype=np.int32)

        if edge_weights is None:
            # weight of the edge into a depth-d node defaults to the parent
            # subtree's width, which dominates the ultrametric pairwise
            w = np.zeros(n, dtype=np.float64)
            nz = depth > 0
            w[nz] = self.c * self.epsilon ** (depth[nz] - 1)
            self.edge_weight = w
        else:
            w = np.asarray(edge_weights, dtype=np.float64).copy()
            if w.shape != (n,):
                raise ValueError("edge_weights must have one entry per node")
            if (w[depth > 0] <= 0).any():
                raise ValueError("edge weights must be positive")
            w[self.root] = 0.0
            self.edge_weight = w

        self._width = self.c * self.epsilon ** self.depth.astype(np.float64)
        self._anc_table = None
        for arr in (self.parent, self.depth, self.child_list, self.child_start,
                    self.leaf_ids, self.edge_weight, self._width):
            arr.setflags(write=False)

    # -- basic queries ----------------------------------------------------

    @property
    def n_leaves(self) -> int:
        return int(self.leaf_ids.size)

    def _check_node(self, x) -> int:
        x = int(x)
        if not 0 <= x < self.n_nodes:
            raise ValueError(f"unknown node id {x}")
        return x

    def children(self, v) -> np.ndarray:
        v = self._check_node(v)
        return self.child_list[self.child_start[v]:self.child_start[v + 1]]

    def lca(self, x, y) -> int:
        x, y = self._check_node(x), self._check_node(y)
        while self.depth[x] > self.depth[y]:
            x = self.parent[x]
        while self.depth[y] > self.depth[x]:
            y = self.parent[y]
        while x != y:
            x = self.parent[x]
            y = self.parent[y]
        return int(x)

    def lca_depth(self, x, y) -> int:
        return int(self.depth[self.lca(x, y)])

    def distance(self, x, y) -> float:
        """Ultrametric distance ``c * epsilon ** depth(lca)``; 0 when x == y."""
        x, y = self._check_node(x), self._check_node(y)
        if x == y:
            return 0.0
        return self.c * self.epsilon ** self.lca_depth(x, y)

    def weighted_distance(self, x, y) -> float:
        """Shortest-path distance under the per-edge weights."""
        x, y = self._check_node(x), self._check_node(y)
        d = 0.0
        while self.depth[x] > self.depth[y]:
            d += self.edge_weight[x]
            x = self.parent[x]
        while self.depth[y] > self.depth[x]:
            d += self.edge_weight[y]
            y = self.parent[y]
        while x != y:
            d += self.edge_weight[x] + self.edge_weight[y]
            x = self.parent[x]
            y = self.parent[y]
        return d

    def width(self, u) -> float:
        """Diameter bound ``c * epsilon ** depth(u)`` of the subtree at u."""
        return float(self._width[self._check_node(u)])

    def leaves_under(self, u) -> np.ndarray:
        u = self._check_node(u)
        out = []
        stack = [u]
        while stack:
            v = stack.pop()
            if self.is_leaf[v]:
                out.append(v)
            else:
                stack.extend(self.children(v)[::-1])
        return np.array(out, dtype=np.int32)

    def ancestor_at_depth(self, x, d) -> int:
        """Ancestor of x at depth d (x itself if depth(x) <= d)."""
        x = self._check_node(x)
        while self.depth[x] > d:
            x = self.parent[x]
        return int(x)

    @property
    def leaf_ancestors(self) -> np.ndarray:
        """Table [leaf_index, d] -> ancestor of that leaf at depth d."""
        if self._anc_table is None:
            tbl = np.empty((self.n_leaves, self.height + 1), dtype=np.int32)
            for i, x in enumerate(self.leaf_ids):
                v = int(x)
                for d in range(self.depth[x], -1, -1):
                    tbl[i, d] = v
                    v = int(self.parent[v])
                for d in range(self.depth[x] + 1, self.height + 1):
                    tbl[i, d] = x
            tbl.setflags(write=False)
            self._anc_table = tbl
        return self._anc_table

    # -- sampling ----------------------------------------------------------

    def sample_leaf(self, u, rng) -> int:
        """Draw a leaf from the subtree at u, uniformly at each branch."""
        u = self._check_node(u)
        us = rng.random(self.height + 1)
        return int(_kernels.descend_uniform(self.child_start, self.child_list, u, us))

    # -- set distances -----------------------------------------------------

    def distance_to_set(self, u, S: Iterable[int]) -> float:
        """Distance cap of the subtree at u against a leaf set S.

        Returns width(u) when S intersects the leaves under u, otherwise
        ``min_{y in S} c * epsilon ** depth(lca(u, y))``. An empty S means no
        cap and yields +inf.
        """
        u = self._check_node(u)
        anc = set()
        empty = True
        for y in S:
            empty = False
            v = self._check_node(y)
            while v != -1 and v not in anc:
                anc.add(v)
                v = int(self.parent[v])
        if empty:
            return math.inf
        v = u
        while v not in anc:
            v = int(self.parent[v])
        return self.c * self.epsilon ** int(self.depth[v])

    # -- serialization -----------------------------------------------------

    def to_text(self) -> str:
        lines = [f"epsilon {self.epsilon!r} c {self.c!r}"]
        for v in range(self.n_nodes):
            p = int(self.parent[v])
            if p < 0:
                lines.append(f"{v} -1 {int(self.depth[v])}")
            else:
                lines.append(f"{v} {p} {int(self.depth[v])} {float(self.edge_weight[v])!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "DocTree":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty tree description")
        head = lines[0].split()
        if len(head) != 4 or head[0] != "epsilon" or head[2] != "c":
            raise ValueError(f"bad header line: {lines[0]!r}")
        epsilon, c = float(head[1]), float(head[3])
        rows = [ln.split() for ln in lines[1:]]
        n = len(rows)
        parent = np.empty(n, dtype=np.int32)
        weights = np.zeros(n, dtype=np.float64)
        has_weights = False
        for row in rows:
            if len(row) not in (3, 4):
                raise ValueError(f"bad node line: {' '.join(row)!r}")
            v, p = int(row[0]), int(row[1])
            if not 0 <= v < n:
                raise ValueError(f"node id {v} out of range")
            parent[v] = p
            if len(row) == 4:
                weights[v] = float(row[3])
                has_weights = True
        tree = cls(parent, epsilon, c, edge_weights=weights if has_weights else None)
        for row in rows:
            if int(tree.depth[int(row[0])]) != int(row[2]):
                raise ValueError(f"depth mismatch at node {row[0]}")
        return tree


def build_balanced_tree(branching: int, depth: int, epsilon: float, c: float = 1.0) -> DocTree:
    """Complete tree with `branching ** depth` leaves, ids in BFS order."""
    if branching < 2:
        raise ValueError(f"branching must be >= 2, got {branching}")
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    if not (0.0 < epsilon < 1.0):
        raise ValueError(f"epsilon must lie in (0,1), got {epsilon}")
    n = (branching ** (depth + 1) - 1) // (branching - 1)
    parent = np.empty(n, dtype=np.int32)
    parent[0] = -1
    parent[1:] = (np.arange(1, n, dtype=np.int64) - 1) // branching
    return DocTree(parent, epsilon, c)


def build_flat_tree(n_leaves: int, epsilon: float = 0.5, c: float = 1.0) -> DocTree:
    """Star tree: all pairwise leaf distances equal c (the metric-less case)."""
    if n_leaves < 1:
        raise ValueError("need at least one leaf")
    parent = np.full(n_leaves + 1, 0, dtype=np.int32)
    parent[0] = -1
    return DocTree(parent, epsilon, c)


def tree_from_parents(parents: Sequence[int], epsilon: float, c: float = 1.0,
                      edge_weights=None) -> DocTree:
    return DocTree(np.asarray(parents, dtype=np.int32), epsilon, c, edge_weights)
