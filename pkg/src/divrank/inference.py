"""Exact probabilistic queries on user distributions.

All queries reduce to probabilities of "irrelevance events" Z(S): the event
that a sampled user finds every document in a leaf set S irrelevant. On a
mutation network these are computed by a bottom-up tree DP; an additional
top-down pass yields P(Z(S + x)) for every leaf x at once, which powers batch
conditional means, pairwise discorrelation, the greedy baseline, and the
property suites. Mixtures combine component queries by total probability;
joint-table instances sum directly.

Everything here is a pure function of immutable inputs.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .user_model import MixtureUser, TableUser, TreeNetwork, UserDistribution


class ConditioningError(ValueError):
    """Raised when conditioning on an impossible irrelevance event."""


def _leaf_set(dist, S) -> tuple[int, ...]:
    tree = dist.tree
    out = []
    seen = set()
    for x in S:
        x = tree._check_node(x)
        if not tree.is_leaf[x]:
            raise ValueError(f"node {x} is not a leaf")
        if x not in seen:
            seen.add(x)
            out.append(x)
    return tuple(out)


# ---------------------------------------------------------------------------
# mutation-network passes
# ---------------------------------------------------------------------------


def _network_z(net: TreeNetwork, S: tuple[int, ...], dtype=np.float64) -> float:
    """P(Z(S)) via one bottom-up pass over the ancestor closure of S."""
    if not S:
        return 1.0
    tree = net.tree
    parent = tree.parent
    nodes: set[int] = set()
    for x in S:
        v = x
        while v >= 0 and v not in nodes:
            nodes.add(v)
            v = int(parent[v])
    order = sorted(nodes, key=lambda v: -int(tree.depth[v]))
    one = dtype(1.0)
    zero = dtype(0.0)
    acc = {v: [one, one] for v in order}
    for x in S:
        acc[x] = [one, zero]
    q0, q1 = net.q0, net.q1
    for v in order:
        g0, g1 = acc[v]
        p = int(parent[v])
        if p < 0:
            mu_r = dtype(net.mu[v])
            return float((one - mu_r) * g0 + mu_r * g1)
        a, b = dtype(q0[v]), dtype(q1[v])
        m0 = (one - a) * g0 + a * g1
        m1 = b * g0 + (one - b) * g1
        acc[p][0] *= m0
        acc[p][1] *= m1
    raise AssertionError("unreachable: root not encountered")


def _network_z_each_leaf(net: TreeNetwork, S: tuple[int, ...]):
    """(P(Z(S)), vector over leaf positions of P(Z(S + leaf))).

    Up pass: g(v,b) = P(all S-leaves under v are 0 | bit(v)=b). Down pass:
    h(v,b) = P(bit(v)=b and all S-leaves outside v are 0). For a leaf x,
    h(x,0) equals P(Z(S + x)) whether or not x is in S.
    """
    tree = net.tree
    n = tree.n_nodes
    g0 = np.ones(n)
    g1 = np.ones(n)
    for x in S:
        g1[x] = 0.0
    m0 = np.empty(n)
    m1 = np.empty(n)
    q0, q1 = net.q0, net.q1
    for v in tree.bfs_order[::-1]:
        ch = tree.children(v)
        if ch.size:
            g0[v] = m0[ch].prod()
            g1[v] *= m1[ch].prod()
        m0[v] = (1.0 - q0[v]) * g0[v] + q0[v] * g1[v]
        m1[v] = q1[v] * g0[v] + (1.0 - q1[v]) * g1[v]

    mu_r = net.mu[tree.root]
    total = (1.0 - mu_r) * g0[tree.root] + mu_r * g1[tree.root]

    h0 = np.empty(n)
    h1 = np.empty(n)
    h0[tree.root] = 1.0 - mu_r
    h1[tree.root] = mu_r
    for v in tree.bfs_order:
        ch = tree.children(v)
        if not ch.size:
            continue
        c0 = m0[ch]
        c1 = m1[ch]
        # exclusive sibling products via prefix*suffix
        k = ch.size
        pre0 = np.ones(k + 1)
        pre1 = np.ones(k + 1)
        np.cumprod(c0, out=pre0[1:])
        np.cumprod(c1, out=pre1[1:])
        suf0 = np.ones(k + 1)
        suf1 = np.ones(k + 1)
        suf0[:-1] = np.cumprod(c0[::-1])[::-1]
        suf1[:-1] = np.cumprod(c1[::-1])[::-1]
        base0 = h0[v] * pre0[:-1] * suf0[1:]
        base1 = h1[v] * pre1[:-1] * suf1[1:]
        h0[ch] = base0 * (1.0 - q0[ch]) + base1 * q1[ch]
        h1[ch] = base0 * q0[ch] + base1 * (1.0 - q1[ch])

    # own-subtree constraint: a leaf contributes its own bit only
    return float(total), h0[tree.leaf_ids].copy()


# ---------------------------------------------------------------------------
# table instances
# ---------------------------------------------------------------------------


def _table_mask(dist: TableUser, S) -> int:
    mask = 0
    for x in S:
        mask |= 1 << int(dist.tree.leaf_index[x])
    return mask


def _table_z(dist: TableUser, S) -> float:
    if not S:
        return 1.0
    mask = _table_mask(dist, S)
    idx = np.arange(dist.probs.size)
    return float(dist.probs[(idx & mask) == 0].sum())


def _table_z_each_leaf(dist: TableUser, S):
    L = dist.tree.n_leaves
    mask = _table_mask(dist, S)
    idx = np.arange(dist.probs.size)
    keep = (idx & mask) == 0
    total = float(dist.probs[keep].sum())
    out = np.empty(L)
    for i in range(L):
        out[i] = float(dist.probs[keep & (dist._bit[i] == 0)].sum())
    return total, out


# ---------------------------------------------------------------------------
# public queries
# ---------------------------------------------------------------------------


def z_probability(dist: UserDistribution, S) -> float:
    """Exact probability that every document in S is irrelevant."""
    S = _leaf_set(dist, S)
    if isinstance(dist, TreeNetwork):
        p = _network_z(dist, S)
        if p < 1e-12 or p > 1.0 - 1e-12:
            # guard against cancellation near the boundary
            p = min(1.0, max(0.0, _network_z(dist, S, dtype=np.longdouble)))
        return p
    if isinstance(dist, MixtureUser):
        return math.fsum(w * z_probability(d, S) for w, d in dist.components)
    if isinstance(dist, TableUser):
        return _table_z(dist, S)
    raise TypeError(f"unsupported distribution {type(dist)!r}")


def z_each_leaf(dist: UserDistribution, S):
    """(P(Z(S)), vector over leaf positions of P(Z(S + leaf)))."""
    S = _leaf_set(dist, S)
    if isinstance(dist, TreeNetwork):
        return _network_z_each_leaf(dist, S)
    if isinstance(dist, TableUser):
        return _table_z_each_leaf(dist, S)
    if isinstance(dist, MixtureUser):
        total = 0.0
        acc = np.zeros(dist.tree.n_leaves)
        for w, d in dist.components:
            p, vec = z_each_leaf(d, S)
            total += w * p
            acc += w * vec
        return total, acc
    raise TypeError(f"unsupported distribution {type(dist)!r}")


def conditional_means(dist: UserDistribution, S) -> np.ndarray:
    """mu(x | Z(S)) for every leaf x (ordered by leaf position)."""
    total, plus = z_each_leaf(dist, S)
    if total <= 0.0:
        raise ConditioningError("conditioning event has probability zero")
    return 1.0 - plus / total


def conditional_mean(dist: UserDistribution, x, S) -> float:
    """mu(x | Z(S)); equals the plain mean for empty S and 0 for x in S."""
    x = dist.tree._check_node(x)
    if not dist.tree.is_leaf[x]:
        raise ValueError(f"node {x} is not a leaf")
    S = _leaf_set(dist, S)
    if x in S:
        return 0.0
    p_s = z_probability(dist, S)
    if p_s <= 0.0:
        raise ConditioningError("conditioning event has probability zero")
    p_sx = z_probability(dist, S + (x,))
    return (p_s - p_sx) / p_s


def discorrelation_prob(dist: UserDistribution, x, y, S) -> float:
    """Exact P(bit(x) != bit(y) | Z(S)).

    Uses the identity P(x!=y | Z) = [P(Z+x) + P(Z+y) - 2 P(Z+x+y)] / P(Z).
    """
    tree = dist.tree
    x, y = tree._check_node(x), tree._check_node(y)
    if x == y:
        return 0.0
    S = _leaf_set(dist, S)
    p_s = z_probability(dist, S)
    if p_s <= 0.0:
        raise ConditioningError("conditioning event has probability zero")
    p_x = z_probability(dist, S + (x,) if x not in S else S)
    p_y = z_probability(dist, S + (y,) if y not in S else S)
    both = S + tuple(v for v in (x, y) if v not in S)
    p_xy = z_probability(dist, both)
    return max(0.0, (p_x + p_y - 2.0 * p_xy) / p_s)


def slate_click_prob(dist: UserDistribution, slate) -> float:
    """Probability that a top-down scanning user clicks somewhere in the slate.

    Duplicates contribute once: a document skipped higher up stays skipped.
    """
    slate = list(slate)
    if not slate:
        raise ValueError("slate must be non-empty")
    return 1.0 - z_probability(dist, set(slate))


class SlateEvaluator:
    """Memoized slate-click probabilities for per-round exact curves."""

    def __init__(self, dist: UserDistribution, memo_cap: int = 200_000):
        self.dist = dist
        self.memo_cap = memo_cap
        self._memo: dict[tuple, float] = {}

    def __call__(self, slate) -> float:
        key = tuple(sorted(set(slate)))
        v = self._memo.get(key)
        if v is None:
            v = 1.0 - z_probability(self.dist, key)
            if len(self._memo) < self.memo_cap:
                self._memo[key] = v
        return v


# ---------------------------------------------------------------------------
# offline baselines
# ---------------------------------------------------------------------------


def _greedy_completion_value(dist, chosen: list[int], candidates, k: int) -> float:
    """Value of finishing greedily with naive smallest-id tie-breaking."""
    chosen = list(chosen)
    while len(chosen) < k:
        means = conditional_means(dist, chosen)
        best_x, best_v = None, -1.0
        for x in candidates:
            if x in chosen:
                continue
            v = means[dist.tree.leaf_index[x]]
            if v > best_v + 1e-15:
                best_x, best_v = x, v
        chosen.append(best_x)
    return slate_click_prob(dist, chosen)


def greedy_ranking(dist: UserDistribution, k: int, candidates=None) -> list[int]:
    """Fill slots top-down, each time taking the conditionally best document.

    Ties (within 1e-12) are resolved pessimistically when the instance is
    small enough to afford it: the tied candidate whose greedy completion has
    the lowest value wins, so the returned ranking realizes the worst greedy
    value. Larger instances fall back to smallest document id.
    """
    tree = dist.tree
    if candidates is None:
        candidates = [int(v) for v in tree.leaf_ids]
    else:
        candidates = sorted(_leaf_set(dist, candidates))
    if k > len(candidates):
        raise ValueError(f"cannot fill {k} slots from {len(candidates)} documents")
    chosen: list[int] = []
    small = len(candidates) <= 12
    for _ in range(k):
        means = conditional_means(dist, chosen)
        vals = {x: float(means[tree.leaf_index[x]]) for x in candidates if x not in chosen}
        top = max(vals.values())
        tied = sorted(x for x, v in vals.items() if v >= top - 1e-12)
        if len(tied) > 1 and small:
            pick = min(tied, key=lambda x: (_greedy_completion_value(
                dist, chosen + [x], candidates, k), x))
        else:
            pick = tied[0]
        chosen.append(pick)
    return chosen


def brute_force_opt(dist: UserDistribution, k: int, candidates=None,
                    max_subsets: int = 1_000_000):
    """Exhaustively best k-subset by click probability: (slate, value).

    Slate order does not change the click probability, so subsets suffice.
    Refuses instances with more than `max_subsets` candidate subsets.
    """
    tree = dist.tree
    if candidates is None:
        candidates = [int(v) for v in tree.leaf_ids]
    else:
        candidates = sorted(_leaf_set(dist, candidates))
    if k > len(candidates):
        raise ValueError(f"cannot fill {k} slots from {len(candidates)} documents")
    if math.comb(len(candidates), k) > max_subsets:
        raise ValueError(
            f"search space C({len(candidates)},{k}) exceeds {max_subsets} subsets")
    best, best_v = None, -1.0
    for combo in itertools.combinations(candidates, k):
        v = slate_click_prob(dist, combo)
        if v > best_v:
            best, best_v = combo, v
    return list(best), best_v
