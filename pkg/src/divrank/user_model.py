"""Generative user distributions over document trees.

A user is a 0/1 relevance vector on all tree nodes. The generative model draws
the root bit with a prescribed expectation and then mutates it edge by edge
going down: a child flips its parent's bit b with probability ``q_b(child)``.
Choosing the mutation tables against the node means keeps every node's
marginal equal to its mean, and bounding ``q0 + q1`` by the edge length over
the parent mean keeps nearby documents positively correlated.

Three distribution flavours share one sampling/inference interface:
``TreeNetwork`` (a single mutation network), ``MixtureUser`` (a finite mixture
of networks over one tree), and ``TableUser`` (an explicit joint table over
leaf assignments, used for tiny hand-built instances).
"""

from __future__ import annotations

import math

import numpy as np

from . import _kernels
from .tree import DocTree, build_flat_tree

CONSISTENCY_ATOL = 1e-12


class ValidationError(ValueError):
    """A model constraint failed; the message names the offending edge/pair."""


# ---------------------------------------------------------------------------
# mean extensions from leaves to internal nodes
# ---------------------------------------------------------------------------


def _leaf_values(tree: DocTree, leaf_mu) -> np.ndarray:
    """Normalize a leaf-mean spec (dict or array over nodes) to a node array."""
    out = np.full(tree.n_nodes, np.nan)
    if isinstance(leaf_mu, dict):
        for x, v in leaf_mu.items():
            if not tree.is_leaf[tree._check_node(x)]:
                raise ValueError(f"node {x} is not a leaf")
            out[int(x)] = float(v)
    else:
        arr = np.asarray(leaf_mu, dtype=np.float64)
        if arr.shape == (tree.n_leaves,):
            out[tree.leaf_ids] = arr
        elif arr.shape == (tree.n_nodes,):
            out[tree.leaf_ids] = arr[tree.leaf_ids]
        else:
            raise ValueError("leaf means must cover the leaves or all nodes")
    if np.isnan(out[tree.leaf_ids]).any():
        missing = tree.leaf_ids[np.isnan(out[tree.leaf_ids])][:5]
        raise ValueError(f"missing mean for leaves {missing.tolist()}")
    return out


def extend_mean_interval(tree: DocTree, leaf_mu, lo=None, hi=None) -> np.ndarray:
    """Extend leaf means to all nodes, preserving range and edge-Lipschitzness.

    Internal values are picked root-down from the feasible interval
    ``[sup_z mu(z) - d(x,z), inf_z mu(z) + d(x,z)]`` (z ranging over leaves
    below x, d the weighted path metric), intersected with ``[lo, hi]`` and
    with the parent's Lipschitz window; ties resolve to the interval midpoint.

    Raises ValidationError naming a violating leaf pair when the input is not
    Lipschitz under the tree's edge weights.
    """
    mu = _leaf_values(tree, leaf_mu)
    leaf_vals = mu[tree.leaf_ids]
    lo = float(leaf_vals.min()) if lo is None else float(lo)
    hi = float(leaf_vals.max()) if hi is None else float(hi)
    if lo > hi:
        raise ValueError("empty clamp range")

    n = tree.n_nodes
    m_lo = np.empty(n)  # sup_z mu(z) - d(x, z)
    m_hi = np.empty(n)  # inf_z mu(z) + d(x, z)
    wit_lo = np.empty(n, dtype=np.int64)  # leaf attaining m_lo
    wit_hi = np.empty(n, dtype=np.int64)
    for v in tree.bfs_order[::-1]:
        if tree.is_leaf[v]:
            m_lo[v] = m_hi[v] = mu[v]
            wit_lo[v] = wit_hi[v] = v
            continue
        best_lo = -math.inf
        best_hi = math.inf
        for u in tree.children(v):
            w = tree.edge_weight[u]
            if m_lo[u] - w > best_lo:
                best_lo = m_lo[u] - w
                wit_lo[v] = wit_lo[u]
            if m_hi[u] + w < best_hi:
                best_hi = m_hi[u] + w
                wit_hi[v] = wit_hi[u]
        m_lo[v], m_hi[v] = best_lo, best_hi
        if best_lo > best_hi + CONSISTENCY_ATOL:
            a, b = int(wit_lo[v]), int(wit_hi[v])
            raise ValidationError(
                f"leaf means are not Lipschitz: |mu({a})-mu({b})| = "
                f"{abs(mu[a] - mu[b]):.6g} exceeds distance "
                f"{tree.weighted_distance(a, b):.6g}")

    out = mu.copy()
    for v in tree.bfs_order:
        if tree.is_leaf[v]:
            continue
        a = max(m_lo[v], lo)
        b = min(m_hi[v], hi)
        p = tree.parent[v]
        if p >= 0:
            w = tree.edge_weight[v]
            a = max(a, out[p] - w)
            b = min(b, out[p] + w)
        if a > b + 1e-9:
            raise ValidationError(f"no feasible value at node {v}")
        out[v] = 0.5 * (a + b)
    return out


def extend_mean_average(tree: DocTree, leaf_mu) -> np.ndarray:
    """Extend leaf means to internal nodes as the mean of children values."""
    out = _leaf_values(tree, leaf_mu)
    for v in tree.bfs_order[::-1]:
        if not tree.is_leaf[v]:
            ch = tree.children(v)
            out[v] = out[ch].mean()
    return out


def parent_child_lipschitz_violations(tree: DocTree, mu, atol=CONSISTENCY_ATOL):
    """Edges where |mu(child) - mu(parent)| exceeds the edge weight."""
    mu = np.asarray(mu, dtype=np.float64)
    out = []
    for v in range(tree.n_nodes):
        p = tree.parent[v]
        if p >= 0 and abs(mu[v] - mu[p]) > tree.edge_weight[v] + atol:
            out.append((int(p), int(v), float(abs(mu[v] - mu[p])), float(tree.edge_weight[v])))
    return out


# ---------------------------------------------------------------------------
# mutation networks
# ---------------------------------------------------------------------------


def mutation_probabilities(mu_parent: float, mu_child: float) -> tuple[float, float]:
    """Minimal flip probabilities (q0, q1) realizing the child's mean.

    The child mean decomposes as (1-mu_parent)*q0 + mu_parent*(1-q1), so with
    one of q0, q1 pinned to zero the other is determined.
    """
    if not 0.0 < mu_parent < 1.0:
        raise ValueError(f"parent mean must lie in (0,1), got {mu_parent}")
    if not 0.0 <= mu_child <= 1.0:
        raise ValueError(f"child mean must lie in [0,1], got {mu_child}")
    if mu_parent >= mu_child:
        return 0.0, (mu_parent - mu_child) / mu_parent
    return (mu_child - mu_parent) / (1.0 - mu_parent), 0.0


class TreeNetwork:
    """A mutation network: node means plus per-node flip tables q0, q1."""

    def __init__(self, tree: DocTree, mu, q0, q1, validate: bool = True):
        self.tree = tree
        self.mu = np.asarray(mu, dtype=np.float64).copy()
        self.q0 = np.asarray(q0, dtype=np.float64).copy()
        self.q1 = np.asarray(q1, dtype=np.float64).copy()
        for name, arr in (("mu", self.mu), ("q0", self.q0), ("q1", self.q1)):
            if arr.shape != (tree.n_nodes,):
                raise ValueError(f"{name} must have one entry per node")
            arr.setflags(write=False)
        if validate:
            self.validate()

    @classmethod
    def from_means(cls, tree: DocTree, mu) -> "TreeNetwork":
        """Build the minimal-mutation network for means on all nodes."""
        mu = np.asarray(mu, dtype=np.float64)
        q0 = np.zeros(tree.n_nodes)
        q1 = np.zeros(tree.n_nodes)
        for v in range(tree.n_nodes):
            p = tree.parent[v]
            if p >= 0:
                q0[v], q1[v] = mutation_probabilities(float(mu[p]), float(mu[v]))
        return cls(tree, mu, q0, q1)

    def validate(self, atol: float = CONSISTENCY_ATOL) -> None:
        t = self.tree
        if ((self.mu < -atol) | (self.mu > 1 + atol)).any():
            raise ValidationError("means must lie in [0,1]")
        if ((self.q0 < -atol) | (self.q0 > 1 + atol) | (self.q1 < -atol) | (self.q1 > 1 + atol)).any():
            raise ValidationError("mutation probabilities must lie in [0,1]")
        for v in range(t.n_nodes):
            p = t.parent[v]
            if p < 0:
                continue
            implied = (1.0 - self.mu[p]) * self.q0[v] + self.mu[p] * (1.0 - self.q1[v])
            if abs(implied - self.mu[v]) > atol:
                raise ValidationError(
                    f"mean consistency fails on edge {p}->{v}: implied "
                    f"{implied:.12g}, stored {self.mu[v]:.12g}")
            if self.mu[p] > 0:
                bound = t.edge_weight[v] / self.mu[p]
                if self.q0[v] + self.q1[v] > bound + atol:
                    raise ValidationError(
                        f"mutation bound fails on edge {p}->{v}: q0+q1 = "
                        f"{self.q0[v] + self.q1[v]:.6g} > d/mu = {bound:.6g}")

    def weak_bound_violations(self, atol: float = CONSISTENCY_ATOL):
        """Nodes whose flip probability exceeds 1/2 (advisory, not enforced)."""
        bad = np.flatnonzero(np.maximum(self.q0, self.q1) > 0.5 + atol)
        return [int(v) for v in bad]

    @property
    def alpha(self) -> float:
        return float(self.mu[self.tree.leaf_ids].min())

    @property
    def leaf_means(self) -> np.ndarray:
        return self.mu[self.tree.leaf_ids]

    # -- sampling --

    def sample(self, rng) -> np.ndarray:
        """Draw one relevance vector over all nodes."""
        t = self.tree
        us = rng.random(t.n_nodes)
        out = np.empty(t.n_nodes, dtype=np.uint8)
        root_bit = 1 if us[0] < self.mu[t.root] else 0
        _kernels.sample_bits(t.bfs_order, t.level_start, t.parent,
                             self.q0, self.q1, root_bit, us, out)
        return out

    def lazy_user(self, rng) -> "LazyRelevance":
        return LazyRelevance(self, rng)


class LazyRelevance:
    """One sampled user, materializing bits only along queried root paths."""

    __slots__ = ("net", "rng", "bits")

    def __init__(self, net: TreeNetwork, rng):
        self.net = net
        self.rng = rng
        self.bits: dict[int, int] = {}

    def __call__(self, x: int) -> int:
        bits = self.bits
        b = bits.get(x)
        if b is not None:
            return b
        net = self.net
        parent = net.tree.parent
        path = []
        v = x
        while v >= 0 and v not in bits:
            path.append(v)
            v = int(parent[v])
        if v < 0:
            root = path.pop()
            cur = 1 if self.rng.random() < net.mu[root] else 0
            bits[root] = cur
        else:
            cur = bits[v]
        for node in reversed(path):
            q = net.q1[node] if cur == 1 else net.q0[node]
            if self.rng.random() < q:
                cur = 1 - cur
            bits[node] = cur
        return cur


class MixtureUser:
    """Finite mixture of user distributions over a single document tree."""

    def __init__(self, components):
        components = [(float(w), d) for w, d in components]
        if not components:
            raise ValueError("mixture needs at least one component")
        if any(w <= 0 for w, _ in components):
            raise ValidationError("mixture weights must be positive")
        total = math.fsum(w for w, _ in components)
        if abs(total - 1.0) > CONSISTENCY_ATOL:
            raise ValidationError(f"mixture weights sum to {total!r}, expected 1")
        trees = {id(d.tree) for _, d in components}
        if len(trees) != 1:
            raise ValueError("mixture components must share one tree")
        self.components = components
        self.tree = components[0][1].tree
        self._cum = np.cumsum([w for w, _ in components])

    @property
    def leaf_means(self) -> np.ndarray:
        acc = np.zeros(self.tree.n_leaves)
        for w, d in self.components:
            acc += w * d.leaf_means
        return acc

    def _pick(self, rng):
        u = rng.random()
        idx = int(np.searchsorted(self._cum, u, side="right"))
        return self.components[min(idx, len(self.components) - 1)][1]

    def sample(self, rng) -> np.ndarray:
        return self._pick(rng).sample(rng)

    def lazy_user(self, rng):
        return self._pick(rng).lazy_user(rng)


class TableUser:
    """Joint table over leaf assignments; bit i of an index drives leaf i."""

    def __init__(self, tree: DocTree, probs):
        L = tree.n_leaves
        if L > 20:
            raise ValueError("joint tables are for small instances only")
        probs = np.asarray(probs, dtype=np.float64).copy()
        if probs.shape != (1 << L,):
            raise ValueError(f"need 2**{L} assignment probabilities")
        if (probs < -CONSISTENCY_ATOL).any() or abs(probs.sum() - 1.0) > 1e-9:
            raise ValidationError("assignment probabilities must form a distribution")
        self.tree = tree
        self.probs = probs
        self.probs.setflags(write=False)
        self._cum = np.cumsum(probs)
        masks = np.arange(1 << L, dtype=np.int64)
        self._bit = [(masks >> i) & 1 for i in range(L)]

    @classmethod
    def independent(cls, tree: DocTree, marginals) -> "TableUser":
        marginals = np.asarray(marginals, dtype=np.float64)
        L = tree.n_leaves
        if marginals.shape != (L,):
            raise ValueError("need one marginal per leaf")
        probs = np.ones(1 << L)
        idx = np.arange(1 << L)
        for i in range(L):
            bit = (idx >> i) & 1
            probs *= np.where(bit == 1, marginals[i], 1.0 - marginals[i])
        return cls(tree, probs)

    @property
    def leaf_means(self) -> np.ndarray:
        return np.array([float(self.probs[self._bit[i] == 1].sum())
                         for i in range(self.tree.n_leaves)])

    def sample(self, rng) -> np.ndarray:
        u = rng.random()
        a = int(min(np.searchsorted(self._cum, u, side="right"), self.probs.size - 1))
        out = np.zeros(self.tree.n_nodes, dtype=np.uint8)
        for i, leaf in enumerate(self.tree.leaf_ids):
            out[leaf] = (a >> i) & 1
        return out

    def lazy_user(self, rng):
        u = rng.random()
        a = int(min(np.searchsorted(self._cum, u, side="right"), self.probs.size - 1))
        leaf_index = self.tree.leaf_index
        return lambda x: (a >> int(leaf_index[x])) & 1


UserDistribution = TreeNetwork | MixtureUser | TableUser


def sample_user(dist: UserDistribution, rng) -> np.ndarray:
    """Draw one relevance vector (array over node ids) from a distribution."""
    return dist.sample(rng)


# ---------------------------------------------------------------------------
# scenario ingredients
# ---------------------------------------------------------------------------


def build_peaked_mean(tree: DocTree, peaks, mu0: float) -> np.ndarray:
    """Leaf means that decay linearly (in tree distance) away from peaks.

    Each leaf gets ``max(mu0, max_i(v_i - d(x, y_i)))`` for peaks
    ``(y_i, v_i)``; with every v_i = 1/2 this is the highest mean profile that
    a background rate mu0 and 1-Lipschitz decay allow. Returns an array over
    all nodes with internal entries NaN (extend separately).
    """
    if mu0 <= 0:
        raise ValueError(f"background rate must be positive, got {mu0}")
    if not peaks:
        raise ValueError("need at least one peak")
    anc = tree.leaf_ancestors
    out = np.full(tree.n_nodes, np.nan)
    best = np.full(tree.n_leaves, -np.inf)
    for y, value in peaks:
        y = tree._check_node(y)
        if not tree.is_leaf[y]:
            raise ValueError(f"peak {y} is not a leaf")
        if value > 0.5 + CONSISTENCY_ATOL:
            raise ValueError(f"peak value {value} exceeds 1/2")
        yi = int(tree.leaf_index[y])
        shared = (anc == anc[yi][None, :]).cumprod(axis=1).sum(axis=1) - 1
        dist = tree.c * tree.epsilon ** shared.astype(np.float64)
        dist[yi] = 0.0
        best = np.maximum(best, value - dist)
    out[tree.leaf_ids] = np.maximum(mu0, best)
    return out


def crp_tables(n: int, theta: float, rng) -> list[int]:
    """Seat n customers by the classic restaurant process; returns table sizes.

    Customer t opens a new table with probability theta / (t - 1 + theta) and
    otherwise joins an existing table with probability proportional to its
    occupancy.
    """
    if n < 1:
        raise ValueError("need at least one customer")
    if theta <= 0:
        raise ValueError("concentration must be positive")
    counts: list[int] = []
    for t in range(1, n + 1):
        x = rng.random() * (t - 1 + theta)
        if x < theta:
            counts.append(1)
        else:
            x -= theta
            acc = 0.0
            for i, k in enumerate(counts):
                acc += k
                if x < acc:
                    counts[i] += 1
                    break
            else:
                counts[-1] += 1
    return counts


def crp_peak_values(counts, n: int, mu0: float) -> list[float]:
    """Map table occupancies to peak relevance rates in (mu0, 1/2]."""
    return [min(0.5, max(k / n, mu0 + 0.01)) for k in counts]


def discussion3_instance() -> TableUser:
    """Three unit-distance documents with independent relevance (1/2, 1/2, 1/3)."""
    tree = build_flat_tree(3, epsilon=0.5)
    return TableUser.independent(tree, [0.5, 0.5, 1.0 / 3.0])
