"""Metric-aware single-slot policies over a document tree.

The zooming policy keeps a set of active subtrees that always partition the
leaves. Each round it plays the active subtree with the best optimistic index
(sampling a document uniformly-by-branch inside it) and splits a subtree into
its children once its confidence radius undercuts its width. An optional
per-round cap bounds every subtree's index by its distance to the documents
already shown above, which is what the multi-slot correlation variant feeds
in.

The grid meta-policy is the non-adaptive ancestor: it sweeps depth levels
globally, running a fresh finite-arm policy on all depth-i subtrees for a
fixed budget before moving one level down.
"""

from __future__ import annotations

import math

import numpy as np

from .. import _kernels
from ..tree import DocTree
from .base import HorizonConfig, SlotPolicy, conf_radius
from .core import EXP3Policy, UCB1Policy


def correlation_caps(tree: DocTree, nodes, S) -> np.ndarray:
    """Index caps: distance of each subtree to the leaf set S.

    Equals width(u) when S meets the subtree at u, else the distance from u
    to the nearest member of S. Empty S yields +inf (no cap).
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    out = np.empty(nodes.size)
    S = list(S)
    if not S:
        out.fill(np.inf)
        return out
    marked = np.zeros(tree.n_nodes, dtype=np.bool_)
    parent = tree.parent
    for y in S:
        v = int(y)
        while v >= 0 and not marked[v]:
            marked[v] = True
            v = int(parent[v])
    _kernels.set_caps(parent, tree.depth, marked, nodes, nodes.size,
                      tree.epsilon, tree.c, out)
    return out


def correlation_cap_map(tree: DocTree, nodes, S) -> dict[int, float]:
    caps = correlation_caps(tree, nodes, S)
    return {int(u): float(c) for u, c in zip(nodes, caps)}


class ZoomingPolicy(SlotPolicy):
    """Adaptive refinement of active subtrees under an optimistic index."""

    def __init__(self, tree: DocTree, cfg: HorizonConfig, leaf_rng,
                 use_cap: bool = False):
        super().__init__()
        self.tree = tree
        self.cfg = cfg
        self.leaf_rng = leaf_rng
        self.use_cap = use_cap
        cap0 = 16
        self.node = np.empty(cap0, dtype=np.int64)
        self.n = np.zeros(cap0)
        self.r = np.zeros(cap0)
        self.width = np.empty(cap0)
        self.count = 1
        self.node[0] = tree.root
        self.width[0] = tree.width(tree.root)
        self._zero = np.zeros(cap0)
        self._caps = np.empty(cap0)
        self._marked = np.zeros(tree.n_nodes, dtype=np.bool_)

    def _grow(self, need: int) -> None:
        cap = self.node.size
        if need <= cap:
            return
        new = max(need, 2 * cap)
        for name in ("node", "n", "r", "width", "_zero", "_caps"):
            old = getattr(self, name)
            arr = np.zeros(new, dtype=old.dtype)
            arr[:cap] = old
            setattr(self, name, arr)

    def active_nodes(self) -> np.ndarray:
        return self.node[:self.count].copy()

    def active_count(self) -> int:
        return self.count

    def select(self, upper_docs=()):
        m = self.count
        use_caps = False
        if self.use_cap and upper_docs:
            self._compute_caps(upper_docs)
            use_caps = True
        pos = _kernels.select_max_index(
            self.n, self.r, self._zero, m, self.cfg.radius_factor,
            self.cfg.radius_coeff, self.node, self._caps, use_caps)
        leaf = self.tree.sample_leaf(int(self.node[pos]), self.leaf_rng)
        self._set_last(pos, leaf)
        return leaf

    def _compute_caps(self, S) -> None:
        marked = self._marked
        parent = self.tree.parent
        touched = []
        for y in S:
            v = int(y)
            while v >= 0 and not marked[v]:
                marked[v] = True
                touched.append(v)
                v = int(parent[v])
        _kernels.set_caps(parent, self.tree.depth, marked, self.node, self.count,
                          self.tree.epsilon, self.tree.c, self._caps)
        for v in touched:
            marked[v] = False

    def update(self, doc, reward):
        reward = self._check_reward(reward)
        pos = self._take_last(doc)
        self._undo.append(("nr", pos, self.n[pos], self.r[pos]))
        self.n[pos] += 1.0
        self.r[pos] += reward
        if conf_radius(int(self.n[pos]), self.cfg) < self.width[pos]:
            u = int(self.node[pos])
            children = self.tree.children(u)
            if children.size:
                self._deactivate(pos, children)

    def _deactivate(self, pos: int, children) -> None:
        # replace the slot with the first child, append the rest; once split,
        # a subtree never becomes active again
        self._undo.append(("deact", pos, self.node[pos], self.n[pos],
                           self.r[pos], self.width[pos], self.count))
        self._grow(self.count + children.size - 1)
        w = self.tree._width
        first = int(children[0])
        self.node[pos] = first
        self.n[pos] = 0.0
        self.r[pos] = 0.0
        self.width[pos] = w[first]
        for ch in children[1:]:
            i = self.count
            self.node[i] = int(ch)
            self.n[i] = 0.0
            self.r[i] = 0.0
            self.width[i] = w[int(ch)]
            self.count += 1

    def _apply_undo(self, entry):
        tag = entry[0]
        if tag == "nr":
            _, pos, n, r = entry
            self.n[pos] = n
            self.r[pos] = r
        elif tag == "deact":
            _, pos, node, n, r, width, count = entry
            self.count = count
            self.node[pos] = node
            self.n[pos] = n
            self.r[pos] = r
            self.width[pos] = width
        else:
            super()._apply_undo(entry)


def _grid_budget(n_arms: int, level: int, epsilon: float) -> int:
    return int(math.ceil(n_arms * epsilon ** (-2 * level)))


class GridPolicy(SlotPolicy):
    """Level sweep: a fresh arm policy on all depth-i subtrees per phase.

    Phase i treats the depth-i subtrees as arms and lasts for
    ceil(#arms * epsilon^(-2 i)) rounds; the final level (individual
    documents) runs forever. With ``replay`` on, the rewards logged during a
    phase seed the matching child arms of the next phase.
    """

    def __init__(self, tree: DocTree, inner: str, cfg: HorizonConfig,
                 select_rng, leaf_rng, replay: bool = False):
        super().__init__()
        if inner not in ("ucb1", "ucb1+", "exp3"):
            raise ValueError(f"unsupported grid inner policy {inner!r}")
        self.tree = tree
        self.inner_name = inner
        self.cfg = cfg
        self.select_rng = select_rng
        self.leaf_rng = leaf_rng
        self.replay = replay
        self._by_depth = [np.flatnonzero(tree.depth == d).astype(np.int64)
                          for d in range(tree.height + 1)]
        self.level = 0
        self.inner = self._make_inner(0)
        self.remaining = _grid_budget(1, 0, tree.epsilon)
        self._log: list[tuple[int, int]] = []

    def _make_inner(self, level: int) -> SlotPolicy:
        arms = self._by_depth[level]
        if self.inner_name == "exp3":
            return EXP3Policy(arms, self.cfg, self.select_rng)
        cfg = self.cfg.with_optimism(self.inner_name.endswith("+"))
        return UCB1Policy(arms, cfg)

    def select(self, upper_docs=()):
        arm = self.inner.select(upper_docs)
        leaf = self.tree.sample_leaf(arm, self.leaf_rng)
        self._set_last(arm, leaf)
        return leaf

    def update(self, doc, reward):
        reward = self._check_reward(reward)
        arm = self._take_last(doc)
        self.inner.update(arm, reward)
        if self.replay:
            self._log.append((doc, reward))
        self._undo.append(("tick", self.remaining))
        self.remaining -= 1
        if self.remaining == 0 and self.level < self.tree.height:
            self._undo.append(("phase", self.level, self.inner, self._log))
            self.level += 1
            self.inner = self._make_inner(self.level)
            arms = self._by_depth[self.level]
            self.remaining = _grid_budget(arms.size, self.level, self.tree.epsilon)
            old_log, self._log = self._log, []
            if self.replay:
                self._replay_into(old_log)

    def _replay_into(self, old_log) -> None:
        pos_of = {int(a): i for i, a in enumerate(self._by_depth[self.level])}
        for leaf, reward in old_log:
            arm = self.tree.ancestor_at_depth(leaf, self.level)
            pos = pos_of[arm]
            if isinstance(self.inner, UCB1Policy):
                self.inner.n[pos] += 1.0
                self.inner.r[pos] += reward
            self._log.append((leaf, reward))

    def snapshot(self):
        return (len(self._undo), self.inner, self.inner.snapshot(), len(self._log))

    def restore(self, token):
        marker, inner, inner_token, log_len = token
        while len(self._undo) > marker:
            self._apply_undo(self._undo.pop())
        assert self.inner is inner
        inner.restore(inner_token)
        del self._log[log_len:]

    def active_count(self):
        return self.inner.active_count()

    def _apply_undo(self, entry):
        tag = entry[0]
        if tag == "tick":
            self.remaining = entry[1]
        elif tag == "phase":
            _, self.level, self.inner, self._log = entry
        else:
            super()._apply_undo(entry)
