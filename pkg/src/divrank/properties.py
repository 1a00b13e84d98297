"""Exact property suites over randomized generative-model instances.

Each suite draws random edge-weighted trees with random mutation networks and
verifies, with the exact inference oracle, the correlation and continuity
guarantees the generative construction is designed to provide:

- scaled-discorrelation: P(bit(x) != bit(y) | Z(S)) <= 3 * Dmu(x, y), where
  Dmu scales the tree distance by min(1/alpha, 3/(mu(x)+mu(y))). Holds for
  every instance of the family unconditionally.
- discorrelation-2d: the same probability <= 2 * d(x, y), asserted on
  instances verified (exhaustively, all conditioning sets) to have
  Lipschitz-continuous conditional means; that premise does not hold for
  every instance, so it is checked, not assumed.
- context-shift: |mu(x|Z(S)) - mu(x|Z(S'))| bounded by the 4x minimum-cover
  set distance between S and S', under the same verified premise.
- mixture-continuity: a two-component mixture keeps conditional Lipschitz
  continuity at every conditioning set where both components have it.

Checks use absolute tolerance 1e-9 on probabilities.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .inference import z_each_leaf
from .tree import DocTree
from .user_model import MixtureUser, TreeNetwork, extend_mean_interval

TOL = 1e-9
_MIN_COND_PROB = 1e-12


# ---------------------------------------------------------------------------
# random instance family
# ---------------------------------------------------------------------------


def random_tree(rng, max_leaves: int = 10) -> DocTree:
    """Random topology (branching 2-3) with random edge weights."""
    n_leaves = int(rng.integers(2, max_leaves + 1))
    parents = [-1]
    pending = [(0, n_leaves)]  # (node, leaves to place under it)
    while pending:
        node,remaining = pending.pop()
        if remaining == 1:
            continue
        k = int(rng.integers(2, min(3, remaining) + 1))
        cuts = sorted(rng.choice(remaining - 1, size=k - 1, replace=False) + 1)
        parts = np.diff([0, *cuts, remaining])
        for part in parts:
            parents.append(node)
            pending.append((len(parents) - 1, int(part)))
    weights = np.zeros(len(parents))
    weights[1:] = rng.uniform(0.1, 0.6, size=len(parents) - 1)
    return DocTree(np.asarray(parents, dtype=np.int32), epsilon=0.5,
                   edge_weights=weights)


def _random_walk_means(tree: DocTree, rng, alpha: float) -> np.ndarray:
    """Node means from a clamped random walk: Lipschitz by construction."""
    slack = rng.uniform(0.3, 1.0)
    mu = np.empty(tree.n_nodes)
    mu[tree.root] = rng.uniform(alpha, 0.5)
    for v in tree.bfs_order[1:]:
        w = tree.edge_weight[v] * slack
        step = rng.uniform(-w, w)
        mu[v] = min(0.5, max(alpha, mu[tree.parent[v]] + step))
    return mu


def random_network(tree: DocTree, rng, alpha: float = 0.05) -> TreeNetwork:
    """Random means plus mutation tables drawn inside the admissible box.

    Leaf means come from a Lipschitz random walk and are re-extended to
    internal nodes through the interval rule. With probability 1/2 the
    mutation tables are the minimal ones; otherwise q0 is drawn uniformly
    between its consistency and edge-budget bounds.
    """
    walk = _random_walk_means(tree, rng, alpha)
    mu = extend_mean_interval(tree, walk[tree.leaf_ids], lo=alpha, hi=0.5)
    if rng.random() < 0.5:
        return TreeNetwork.from_means(tree, mu)
    q0 = np.zeros(tree.n_nodes)
    q1 = np.zeros(tree.n_nodes)
    for v in range(tree.n_nodes):
        p = tree.parent[v]
        if p < 0:
            continue
        lo = max(0.0, (mu[v] - mu[p]) / (1.0 - mu[p]))
        hi = min(mu[v] / (1.0 - mu[p]),
                 mu[v] - mu[p] + tree.edge_weight[v])
        hi = max(lo, hi)
        q0[v] = lo + (hi - lo) * rng.random() ** 2
        q1[v] = (mu[p] - mu[v] + (1.0 - mu[p]) * q0[v]) / mu[p]
    return TreeNetwork(tree, mu, q0, q1)


def random_instance(rng, max_leaves: int = 10, alpha: float = 0.05) -> TreeNetwork:
    return random_network(random_tree(rng, max_leaves), rng, alpha)


def weighted_leaf_distances(tree: DocTree) -> np.ndarray:
    L = tree.n_leaves
    D = np.zeros((L, L))
    for i in range(L):
        for j in range(i + 1, L):
            D[i, j] = D[j, i] = tree.weighted_distance(
                int(tree.leaf_ids[i]), int(tree.leaf_ids[j]))
    return D


def set_distance_from_matrix(D: np.ndarray, A, B) -> float:
    """4x the cheapest covering pairing between index sets A and B."""
    A, B = sorted(set(A)), sorted(set(B))
    if not A and not B:
        return 0.0
    if not A or not B:
        return math.inf
    if len(A) > len(B):
        A, B = B, A
    sub = D[np.ix_(A, B)]
    fill = sub.min(axis=0)
    best = math.inf
    for assign in itertools.product(range(len(B)), repeat=len(A)):
        cost = sum(sub[i, j] for i, j in enumerate(assign))
        covered = set(assign)
        cost += sum(fill[j] for j in range(len(B)) if j not in covered)
        best = min(best, cost)
    return 4.0 * best


# ---------------------------------------------------------------------------
# per-instance exact tables
# ---------------------------------------------------------------------------


def conditional_mean_table(net, subsets):
    """{subset (leaf positions) -> (P(Z), conditional-mean vector)}.

    Subsets whose irrelevance event has probability below 1e-12 are skipped.
    """
    leaf_ids = net.tree.leaf_ids
    table = {}
    for S in subsets:
        ids = tuple(int(leaf_ids[i]) for i in S)
        pz, plus = z_each_leaf(net, ids)
        if pz < _MIN_COND_PROB:
            continue
        table[S] = (pz, 1.0 - plus / pz)
    return table


def continuity_holds_at(means: np.ndarray, D: np.ndarray) -> bool:
    diff = np.abs(means[:, None] - means[None, :])
    return bool((diff <= D + TOL).all())


def verify_conditional_continuity(net: TreeNetwork, D: np.ndarray) -> bool:
    """Exhaustive check over every conditioning subset of the leaves."""
    L = net.tree.n_leaves
    positions = range(L)
    for size in range(0, L + 1):
        for S in itertools.combinations(positions, size):
            tab = conditional_mean_table(net, [S])
            if S in tab and not continuity_holds_at(tab[S][1], D):
                return False
    return True


def pairwise_discorrelation(net, S_ids: tuple[int, ...]):
    """(P(Z(S)), matrix of P(bit(x) != bit(y) | Z(S)) over leaf positions)."""
    pz, plus = z_each_leaf(net, S_ids)
    if pz < _MIN_COND_PROB:
        return pz, None
    L = plus.size
    disc = np.zeros((L, L))
    leaf_ids = net.tree.leaf_ids
    for xi in range(L):
        _, plus_x = z_each_leaf(net, S_ids + (int(leaf_ids[xi]),))
        row = (plus[xi] + plus - 2.0 * plus_x) / pz
        disc[xi] = np.maximum(row, 0.0)
    return pz, disc


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------


@dataclass
class SuiteReport:
    name: str
    instances: int = 0
    premise_instances: int = 0
    checks: int = 0
    violations: list[str] = field(default_factory=list)
    worst_margin: float = -math.inf  # most positive value of (lhs - bound)

    def record(self, lhs: float, bound: float, msg: str) -> None:
        self.checks += 1
        margin = lhs - bound
        self.worst_margin = max(self.worst_margin, margin)
        if margin > TOL and len(self.violations) < 20:
            self.violations.append(f"{msg}: {lhs:.12g} > {bound:.12g} + tol")

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        status = "ok" if self.ok else f"{len(self.violations)} VIOLATIONS"
        return (f"{self.name}: {status} ({self.instances} instances, "
                f"{self.premise_instances} with premise, {self.checks} checks, "
                f"worst margin {self.worst_margin:+.3g})")


def _leaf_subsets(L: int, s_max: int):
    return [S for size in range(0, s_max + 1)
            for S in itertools.combinations(range(L), size)]


def run_property_suites(n_instances: int = 100, seed: int = 0,
                        max_leaves: int = 10, alpha: float = 0.05,
                        s_max: int = 3, progress=None) -> dict[str, SuiteReport]:
    """Run all four suites; returns reports keyed by suite name."""
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x9B0B5)))
    scaled = SuiteReport("scaled-discorrelation")
    two_d = SuiteReport("discorrelation-2d")
    shift = SuiteReport("context-shift")
    mix = SuiteReport("mixture-continuity")

    for inst in range(n_instances):
        if progress:
            progress(f"instance {inst + 1}/{n_instances}")
        tree = random_tree(rng, max_leaves)
        net = random_network(tree, rng, alpha)
        D = weighted_leaf_distances(tree)
        L = tree.n_leaves
        mu = net.leaf_means
        a = net.alpha
        dmu = D * np.minimum(1.0 / a, 3.0 / (mu[:, None] + mu[None, :]))

        premise = verify_conditional_continuity(net, D)
        subsets = _leaf_subsets(L, s_max)
        mean_table = conditional_mean_table(net, subsets)

        scaled.instances += 1
        two_d.instances += 1
        shift.instances += 1
        if premise:
            two_d.premise_instances += 1
            shift.premise_instances += 1
        scaled.premise_instances += 1

        leaf_ids = tree.leaf_ids
        for S in subsets:
            ids = tuple(int(leaf_ids[i]) for i in S)
            pz, disc = pairwise_discorrelation(net, ids)
            if disc is None:
                continue
            for xi in range(L):
                for yi in range(xi + 1, L):
                    scaled.record(disc[xi, yi], 3.0 * dmu[xi, yi],
                                  f"inst {inst} S={S} pair ({xi},{yi})")
                    if premise:
                        two_d.record(disc[xi, yi], 2.0 * D[xi, yi],
                                     f"inst {inst} S={S} pair ({xi},{yi})")

        if premise:
            keys = sorted(mean_table)
            for ai in range(len(keys)):
                for bi in range(ai + 1, len(keys)):
                    Sa, Sb = keys[ai], keys[bi]
                    dhat = set_distance_from_matrix(D, Sa, Sb)
                    gap = float(np.abs(mean_table[Sa][1] - mean_table[Sb][1]).max())
                    shift.record(gap, dhat, f"inst {inst} {Sa} vs {Sb}")

        # mixture of two networks over the same tree
        net_b = random_network(tree, rng, alpha)
        weight = float(rng.uniform(0.2, 0.8))
        mixture = MixtureUser([(weight, net), (1.0 - weight, net_b)])
        table_b = conditional_mean_table(net_b, subsets)
        mix.instances += 1
        counted = False
        for S in subsets:
            if S not in mean_table or S not in table_b:
                continue
            if not (continuity_holds_at(mean_table[S][1], D)
                    and continuity_holds_at(table_b[S][1], D)):
                continue
            if not counted:
                mix.premise_instances += 1
                counted = True
            ids = tuple(int(leaf_ids[i]) for i in S)
            pz, plus = z_each_leaf(mixture, ids)
            if pz < _MIN_COND_PROB:
                continue
            means = 1.0 - plus / pz
            diff = np.abs(means[:, None] - means[None, :])
            for xi in range(L):
                for yi in range(xi + 1, L):
                    mix.record(diff[xi, yi], D[xi, yi],
                               f"inst {inst} S={S} pair ({xi},{yi})")

    return {r.name: r for r in (scaled, two_d, shift, mix)}
