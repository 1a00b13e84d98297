import math

import numpy as np
import pytest

from divrank.inference import conditional_means
from divrank.policies import (GridPolicy, HorizonConfig, ZoomingPolicy,
                              correlation_cap_map, correlation_caps)
from divrank.policies.zooming import _grid_budget
from divrank.tree import build_balanced_tree
from divrank.user_model import TreeNetwork, build_peaked_mean, extend_mean_average


def leaf_partition_ok(tree, nodes):
    seen = []
    for u in nodes:
        seen.extend(int(x) for x in tree.leaves_under(int(u)))
    return sorted(seen) == sorted(int(x) for x in tree.leaf_ids)


def make_policy(tree, T=1000, optimistic=True, use_cap=False, seed=0):
    rng = np.random.default_rng(seed)
    return ZoomingPolicy(tree, HorizonConfig(T, optimistic=optimistic), rng,
                         use_cap=use_cap)


class TestZoomingSelect:
    def test_single_root_chosen(self):
        tree = build_balanced_tree(2, 3, 0.5)
        pol = make_policy(tree)
        leaf = pol.select()
        assert pol._last[0] == 0  # root position
        assert tree.is_leaf[leaf]

    def test_cap_zero_excludes(self):
        tree = build_balanced_tree(2, 2, 0.5)
        pol = make_policy(tree, use_cap=True)
        pol.update(pol.select(), 0)  # splits the root after one sample
        assert pol.count == 2
        # cap the left child at 0 by conditioning on one of its leaves
        left, right = (int(v) for v in tree.children(0))
        inside = int(tree.leaves_under(left)[0])
        leaf = pol.select(upper_docs=(inside,))
        assert int(tree.leaf_index[leaf]) >= 0
        assert tree.ancestor_at_depth(leaf, 1) == right

    def test_hand_index_comparison(self):
        # optimistic: n=4,r=4 gives 1 + 2*sqrt(1/5) ~ 1.894 < 2 = fresh index
        tree = build_balanced_tree(2, 1, 0.5)
        pol = make_policy(tree)
        pol.update(pol.select(), 1)  # root splits immediately (width 1)
        assert pol.count == 2
        pol.n[0], pol.r[0] = 4.0, 4.0
        leaf = pol.select()
        assert pol._last[0] == 1  # the unplayed subtree wins
        assert 1 + 2 * math.sqrt(1 / 5) < 2 * math.sqrt(1 / 1)
        assert tree.is_leaf[leaf]

    def test_tie_breaks_to_smaller_node_id(self):
        tree = build_balanced_tree(2, 2, 0.5)
        pol = make_policy(tree)
        pol.update(pol.select(), 0)
        assert pol.count == 2
        pol.select()
        assert int(pol.node[pol._last[0]]) == 1


class TestZoomingUpdate:
    def test_leaf_never_deactivates(self):
        tree = build_balanced_tree(2, 1, 0.5)
        pol = make_policy(tree)
        pol.update(pol.select(), 1)
        for _ in range(50):
            pol.update(pol.select(), 1)
        assert pol.count == 2
        assert all(tree.is_leaf[int(v)] for v in pol.active_nodes())

    def test_binary_split_grows_by_one(self):
        tree = build_balanced_tree(2, 3, 0.5)
        pol = make_policy(tree)
        before = pol.count
        pol.update(pol.select(), 0)
        assert pol.count == before + 1

    def test_root_deactivates_after_first_sample(self):
        # optimistic radius sqrt(1/(1+n)) drops under width 1 at n=1
        tree = build_balanced_tree(2, 4, 0.837)
        pol = make_policy(tree)
        assert pol.count == 1
        pol.update(pol.select(), 0)
        assert pol.count == 2
        assert 0 not in pol.active_nodes()

    def test_partition_invariant_along_run(self):
        tree = build_balanced_tree(3, 3, 0.6)
        pol = make_policy(tree, T=5000)
        rng = np.random.default_rng(1)
        for t in range(2000):
            leaf = pol.select()
            pol.update(leaf, int(rng.random() < 0.4))
            if t % 100 == 0:
                assert leaf_partition_ok(tree, pol.active_nodes())
        assert leaf_partition_ok(tree, pol.active_nodes())

    def test_deactivation_monotone(self):
        tree = build_balanced_tree(2, 4, 0.7)
        pol = make_policy(tree, T=3000)
        rng = np.random.default_rng(2)
        dead = set()
        for _ in range(3000):
            active_before = set(int(v) for v in pol.active_nodes())
            assert not (active_before & dead)
            leaf = pol.select()
            pol.update(leaf, int(rng.random() < 0.5))
            active_after = set(int(v) for v in pol.active_nodes())
            dead |= active_before - active_after


class TestRollback:
    def test_snapshot_restores_exact_state(self):
        tree = build_balanced_tree(2, 4, 0.7)
        pol = make_policy(tree, T=2000)
        rng = np.random.default_rng(3)
        for _ in range(200):
            pol.update(pol.select(), int(rng.random() < 0.5))
        state = (pol.count, pol.node[:pol.count].copy(), pol.n[:pol.count].copy(),
                 pol.r[:pol.count].copy())
        token = pol.snapshot()
        for _ in range(3):
            leaf = pol.select()
        pol.update(leaf, 1)
        pol.restore(token)
        assert pol.count == state[0]
        np.testing.assert_array_equal(pol.node[:pol.count], state[1])
        np.testing.assert_array_equal(pol.n[:pol.count], state[2])
        np.testing.assert_array_equal(pol.r[:pol.count], state[3])


class TestCorrelationCaps:
    def test_empty_set_no_caps(self):
        tree = build_balanced_tree(2, 3, 0.5)
        caps = correlation_caps(tree, [0, 1, 2], [])
        assert np.isinf(caps).all()
        assert correlation_cap_map(tree, [0], []) == {0: math.inf}

    def test_subtree_containing_s_gets_width(self):
        tree = build_balanced_tree(2, 3, 0.5)
        u = int(tree.children(0)[0])
        y = int(tree.leaves_under(u)[2])
        caps = correlation_cap_map(tree, [u], [y])
        assert caps[u] == pytest.approx(tree.width(u))

    def test_disjoint_cap_lca_depth1(self):
        tree = build_balanced_tree(2, 3, 0.837)
        left, right = (int(v) for v in tree.children(0))
        u = int(tree.children(left)[0])
        y = int(tree.leaves_under(int(tree.children(left)[1]))[0])
        caps = correlation_cap_map(tree, [u], [y])
        assert caps[u] == pytest.approx(0.837)

    def test_matches_distance_to_set(self):
        tree = build_balanced_tree(2, 4, 0.7)
        rng = np.random.default_rng(4)
        nodes = rng.integers(0, tree.n_nodes, size=12)
        S = [int(tree.leaf_ids[i]) for i in rng.choice(tree.n_leaves, 3, replace=False)]
        caps = correlation_caps(tree, nodes, S)
        for u, c in zip(nodes, caps):
            assert c == pytest.approx(tree.distance_to_set(int(u), S))

    def test_cap_bounds_exact_conditional_means(self):
        # verified on an instance whose conditional means are exactly
        # Lipschitz-continuous (constant background plus a single mild peak)
        tree = build_balanced_tree(2, 4, 0.7)
        mu = extend_mean_average(tree, build_peaked_mean(
            tree, [(int(tree.leaf_ids[5]), 0.5)], 0.05))
        net = TreeNetwork.from_means(tree, mu)
        rng = np.random.default_rng(5)
        leaves = [int(v) for v in tree.leaf_ids]
        for _ in range(40):
            S = [leaves[i] for i in rng.choice(len(leaves), 2, replace=False)]
            means = conditional_means(net, S)
            if np.any(np.abs(means[:, None] - means[None, :]) >
                      np.array([[tree.distance(a, b) for b in leaves] for a in leaves]) + 1e-9):
                continue  # skip sets where the continuity premise fails
            nodes = np.arange(tree.n_nodes)
            caps = correlation_caps(tree, nodes, S)
            for u in nodes:
                under = tree.leaves_under(int(u))
                worst = max(means[tree.leaf_index[x]] for x in under)
                assert worst <= caps[u] + 1e-9


class TestGridPolicy:
    def test_budget_formula(self):
        assert _grid_budget(1, 0, 0.5) == 1
        assert _grid_budget(4, 2, 0.5) == 64

    def test_phase_zero_one_round(self):
        tree = build_balanced_tree(2, 3, 0.5)
        pol = GridPolicy(tree, "ucb1", HorizonConfig(100), np.random.default_rng(0),
                         np.random.default_rng(1))
        assert pol.level == 0 and pol.remaining == 1
        pol.update(pol.select(), 0)
        assert pol.level == 1
        assert pol.remaining == _grid_budget(2, 1, 0.5)

    def test_final_phase_arms_are_leaves(self):
        tree = build_balanced_tree(2, 2, 0.5)
        pol = GridPolicy(tree, "ucb1+", HorizonConfig(10_000),
                         np.random.default_rng(0), np.random.default_rng(1))
        rng = np.random.default_rng(2)
        total = 1 + _grid_budget(2, 1, 0.5) + 10
        for _ in range(total):
            pol.update(pol.select(), int(rng.random() < 0.5))
        assert pol.level == tree.height
        np.testing.assert_array_equal(pol.inner.arm_ids, tree.leaf_ids)
        # the last level never advances
        for _ in range(2 * _grid_budget(4, 2, 0.5)):
            pol.update(pol.select(), 0)
        assert pol.level == tree.height

    def test_replay_seeds_next_phase(self):
        tree = build_balanced_tree(2, 2, 0.5)
        pol = GridPolicy(tree, "ucb1", HorizonConfig(100), np.random.default_rng(0),
                         np.random.default_rng(1), replay=True)
        leaf = pol.select()
        pol.update(leaf, 1)
        assert pol.level == 1
        assert pol.inner.n.sum() == 1.0
        pos = {int(a): i for i, a in enumerate(pol.inner.arm_ids)}
        arm = tree.ancestor_at_depth(leaf, 1)
        assert pol.inner.n[pos[arm]] == 1.0 and pol.inner.r[pos[arm]] == 1.0

    def test_unknown_inner_rejected(self):
        tree = build_balanced_tree(2, 2, 0.5)
        with pytest.raises(ValueError, match="grid inner"):
            GridPolicy(tree, "thompson", HorizonConfig(10),
                       np.random.default_rng(0), np.random.default_rng(1))


class TestZoomingConvergence:
    def test_single_peak_concentration(self):
        # 64 documents, one clear peak: most late pulls land near it
        tree = build_balanced_tree(2, 6, 0.837)
        rng = np.random.default_rng(0)
        peak = int(tree.leaf_ids[17])
        mu = extend_mean_average(tree, build_peaked_mean(tree, [(peak, 0.5)], 0.05))
        net = TreeNetwork.from_means(tree, mu)
        rounds = 50_000
        hits = []
        for seed in range(20):
            streams = np.random.default_rng((seed, 1)).spawn(3)
            pol = ZoomingPolicy(tree, HorizonConfig(rounds, optimistic=True),
                                streams[0])
            user_rng = streams[1]
            near = total = 0
            for t in range(rounds):
                leaf = pol.select()
                reward = int(user_rng.random() < mu[leaf])
                pol.update(leaf, reward)
                if t >= rounds * 3 // 4:
                    total += 1
                    near += tree.distance(leaf, peak) <= 0.25
            hits.append(near / total)
        assert np.mean(hits) > 0.9
