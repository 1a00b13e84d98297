"""Contextual zooming: adaptive rectangles over documents x upper-slot tuples.

For slot i+1 the context is the unordered i-tuple of documents already placed
above. Context space is itself tree-structured: a depth-l context node is an
unordered i-tuple of depth-l document-tree nodes, whose children are all
member-wise children combinations. The policy keeps active rectangles
(document subtree, context node); for every concrete context the rectangles
containing it partition the documents. Selection maximizes
``width + mean + conf_radius`` over containing rectangles, optionally capped
by the rectangle's document-distance to the context set; a rectangle splits
into the cross product of its coordinate children once its radius undercuts
its width.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .. import _kernels
from ..tree import DocTree
from .base import HorizonConfig, SlotPolicy, conf_radius


def rectangle_width(i: int, l: int, epsilon: float, c: float = 1.0) -> float:
    """Diameter bound for a depth-l rectangle with i-tuple contexts."""
    if i < 0 or l < 0:
        raise ValueError("tuple size and depth must be non-negative")
    return c * epsilon ** l * (4 * i + 1)


def context_distance(tree: DocTree, a, b, exact: bool = True) -> float:
    """Set distance: 4x the cheapest pairing that covers both tuples.

    A pairing is a sequence of document pairs (one from each side, repeats
    allowed) that mentions every member of both sets; its cost is the summed
    document distance. The exact minimum is found by enumerating, for each
    left member, its partner, then covering leftover right members with their
    cheapest option; ``exact=False`` replaces the enumeration with the greedy
    nearest-partner choice (an upper bound).
    """
    A = sorted({int(x) for x in a})
    B = sorted({int(x) for x in b})
    if not A and not B:
        return 0.0
    if not A or not B:
        return math.inf
    if len(A) > len(B):
        A, B = B, A
    D = np.array([[tree.distance(x, y) for y in B] for x in A])
    fill = D.min(axis=0)
    if not exact:
        base = float(D.min(axis=1).sum())
        covered = set(int(np.argmin(D[i])) for i in range(len(A)))
        extra = float(sum(fill[j] for j in range(len(B)) if j not in covered))
        return 4.0 * (base + extra)
    best = math.inf
    for assign in itertools.product(range(len(B)), repeat=len(A)):
        cost = sum(D[i, j] for i, j in enumerate(assign))
        covered = set(assign)
        cost += sum(fill[j] for j in range(len(B)) if j not in covered)
        best = min(best, cost)
    return 4.0 * best


def build_context_children(tree: DocTree, ctx: tuple[int, ...]) -> list[tuple[int, ...]]:
    """All member-wise children combinations of an unordered tuple, deduped.

    A tuple with any leaf member has no children: the context coordinate
    cannot refine past documents. The empty tuple is terminal.
    """
    if not ctx:
        return []
    kid_lists = []
    for m in ctx:
        kids = tree.children(m)
        if kids.size == 0:
            return []
        kid_lists.append([int(v) for v in kids])
    combos = {tuple(sorted(combo)) for combo in itertools.product(*kid_lists)}
    return sorted(combos)


class ContextualZoomingPolicy(SlotPolicy):
    """Zooming in the product of the document tree and the context tree."""

    def __init__(self, tree: DocTree, context_size: int, cfg: HorizonConfig,
                 leaf_rng, use_cap: bool = True, radius_coeff: float = 1.0):
        super().__init__()
        if context_size < 0:
            raise ValueError("context size cannot be negative")
        self.tree = tree
        self.context_size = context_size
        self.cfg = cfg
        self.leaf_rng = leaf_rng
        self.use_cap = use_cap
        self.radius_coeff = radius_coeff

        cap0 = 16
        self.doc = np.empty(cap0, dtype=np.int64)
        self.n = np.zeros(cap0)
        self.r = np.zeros(cap0)
        self.width = np.empty(cap0)
        self.ids = np.empty(cap0, dtype=np.int64)
        self.rect_ctx: list[tuple[int, ...]] = []
        self.ctx_map: dict[tuple[int, ...], list[int]] = {}
        self._depth_live: dict[int, int] = {}
        self.count = 0
        self.live = 0
        self._marked = np.zeros(tree.n_nodes, dtype=np.bool_)

        root_ctx = (tree.root,) * context_size
        self._add_rect(tree.root, root_ctx)

    # -- rectangle bookkeeping ----------------------------------------------

    def _rect_width(self, doc_node: int, ctx: tuple[int, ...]) -> float:
        t = self.tree
        l_doc = int(t.depth[doc_node])
        if not ctx:
            return t.c * t.epsilon ** l_doc
        l_ctx = int(t.depth[ctx[0]])
        return (t.c * t.epsilon ** l_doc
                + 4 * self.context_size * t.c * t.epsilon ** l_ctx)

    def _grow(self, need: int) -> None:
        cap = self.doc.size
        if need <= cap:
            return
        new = max(need, 2 * cap)
        for name in ("doc", "n", "r", "width", "ids"):
            old = getattr(self, name)
            arr = np.zeros(new, dtype=old.dtype)
            arr[:cap] = old
            setattr(self, name, arr)

    def _ctx_depth(self, ctx: tuple[int, ...]) -> int:
        return int(self.tree.depth[ctx[0]]) if ctx else 0

    def _add_rect(self, doc_node: int, ctx: tuple[int, ...]) -> int:
        pos = self.count
        self._grow(pos + 1)
        self.doc[pos] = doc_node
        self.n[pos] = 0.0
        self.r[pos] = 0.0
        self.width[pos] = self._rect_width(doc_node, ctx)
        self.ids[pos] = (doc_node << 32) | pos
        self.rect_ctx.append(ctx)
        self.ctx_map.setdefault(ctx, []).append(pos)
        d = self._ctx_depth(ctx)
        self._depth_live[d] = self._depth_live.get(d, 0) + 1
        self.count += 1
        self.live += 1
        return pos

    def _context_key(self, h: tuple[int, ...], depth: int) -> tuple[int, ...]:
        anc = self.tree.leaf_ancestors
        leaf_index = self.tree.leaf_index
        return tuple(sorted(int(anc[leaf_index[x], depth]) for x in h))

    def candidates_for(self, h: tuple[int, ...]) -> list[int]:
        """Live rectangle positions whose context node contains h."""
        out: list[int] = []
        for d, cnt in self._depth_live.items():
            if cnt <= 0:
                continue
            out.extend(self.ctx_map.get(self._context_key(h, d), ()))
        return out

    # -- policy interface -----------------------------------------------------

    def active_count(self) -> int:
        return self.live

    def select(self, upper_docs=()):
        h = tuple(sorted(int(x) for x in upper_docs))
        if len(h) != self.context_size:
            raise ValueError(
                f"expected a {self.context_size}-tuple context, got {len(h)} documents")
        cand = self.candidates_for(h)
        if not cand:
            raise RuntimeError("no active rectangle contains the context")
        idx = np.asarray(cand, dtype=np.int64)
        m = idx.size
        cn = self.n[idx]
        cr = self.r[idx]
        cw = self.width[idx]
        cids = self.ids[idx]
        caps = cw  # placeholder, unused when use_caps is False
        use_caps = False
        if self.use_cap:
            caps = self._caps_for(idx, h)
            use_caps = True
        rel = _kernels.select_max_index(cn, cr, cw, m, self.cfg.radius_factor,
                                        self.radius_coeff, cids, caps, use_caps)
        pos = int(idx[rel])
        leaf = self.tree.sample_leaf(int(self.doc[pos]), self.leaf_rng)
        self._set_last(pos, leaf)
        return leaf

    def _caps_for(self, idx: np.ndarray, S) -> np.ndarray:
        t = self.tree
        marked = self._marked
        touched = []
        for y in S:
            v = int(y)
            while v >= 0 and not marked[v]:
                marked[v] = True
                touched.append(v)
                v = int(t.parent[v])
        out = np.empty(idx.size)
        nodes = self.doc[idx]
        _kernels.set_caps(t.parent, t.depth, marked, nodes, nodes.size,
                          t.epsilon, t.c, out)
        for v in touched:
            marked[v] = False
        return out

    def update(self, doc, reward):
        reward = self._check_reward(reward)
        pos = self._take_last(doc)
        self._undo.append(("nr", pos, self.n[pos], self.r[pos]))
        self.n[pos] += 1.0
        self.r[pos] += reward
        if conf_radius(int(self.n[pos]), self.cfg) >= self.width[pos]:
            return
        doc_node = int(self.doc[pos])
        ctx = self.rect_ctx[pos]
        doc_children = [int(v) for v in self.tree.children(doc_node)]
        ctx_children = build_context_children(self.tree, ctx)
        if not doc_children and not ctx_children:
            return  # terminal rectangle
        self._undo.append(("deact", pos, ctx, self.count))
        self.ctx_map[ctx].remove(pos)
        self._depth_live[self._ctx_depth(ctx)] -= 1
        self.live -= 1
        for dnode in (doc_children or [doc_node]):
            for cnode in (ctx_children or [ctx]):
                self._add_rect(dnode, cnode)

    def _apply_undo(self, entry):
        tag = entry[0]
        if tag == "nr":
            _, pos, n, r = entry
            self.n[pos] = n
            self.r[pos] = r
        elif tag == "deact":
            _, pos, ctx, old_count = entry
            for p in range(self.count - 1, old_count - 1, -1):
                key = self.rect_ctx[p]
                lst = self.ctx_map[key]
                if lst and lst[-1] == p:
                    lst.pop()
                else:
                    lst.remove(p)
                self._depth_live[self._ctx_depth(key)] -= 1
                self.live -= 1
            del self.rect_ctx[old_count:]
            self.count = old_count
            self.ctx_map[ctx].append(pos)
            self._depth_live[self._ctx_depth(ctx)] += 1
            self.live += 1
        else:
            super()._apply_undo(entry)
