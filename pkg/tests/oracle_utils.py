"""Brute-force oracles shared across test modules.

These deliberately avoid the library's DP passes: probabilities come from
enumeration over all joint node assignments, so they stay independent of the
code paths they check.
"""

import itertools

import numpy as np


def assignment_probability(net, bits) -> float:
    t = net.tree
    p = net.mu[t.root] if bits[t.root] else 1.0 - net.mu[t.root]
    for v in range(t.n_nodes):
        pa = t.parent[v]
        if pa < 0:
            continue
        q = net.q1[v] if bits[pa] else net.q0[v]
        p *= q if bits[v] != bits[pa] else 1.0 - q
    return p


def enumerate_z(net, S) -> float:
    total = 0.0
    for bits in itertools.product((0, 1), repeat=net.tree.n_nodes):
        if all(bits[x] == 0 for x in S):
            total += assignment_probability(net, bits)
    return total


def enumerate_conditional_mean(net, x, S) -> float:
    num = den = 0.0
    for bits in itertools.product((0, 1), repeat=net.tree.n_nodes):
        if all(bits[s] == 0 for s in S):
            p = assignment_probability(net, bits)
            den += p
            num += p * bits[x]
    return num / den


def enumerate_discorrelation(net, x, y, S) -> float:
    num = den = 0.0
    for bits in itertools.product((0, 1), repeat=net.tree.n_nodes):
        if all(bits[s] == 0 for s in S):
            p = assignment_probability(net, bits)
            den += p
            if bits[x] != bits[y]:
                num += p
    return num / den


def small_random_networks(count, max_leaves=4, seed=0, max_nodes=12):
    from divrank.properties import random_network, random_tree
    rng = np.random.default_rng(seed)
    nets = []
    while len(nets) < count:
        t = random_tree(rng, max_leaves=max_leaves)
        if t.n_nodes <= max_nodes:
            nets.append(random_network(t, rng))
    return nets
