#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallbacks.

Two views:
  * microbenchmarks of each kernel pair on policy-sized inputs;
  * an end-to-end simulation throughput comparison, run in subprocesses with
    DIVRANK_NUMBA=1 and =0 so each process binds its backend at import time.

Usage: python benchmarks/bench_backends.py [--rounds 30000]
"""

import argparse
import os
import subprocess
import sys
import time
import timeit

import numpy as np

from divrank import _kernels as K
from divrank.tree import build_balanced_tree

_END_TO_END = r"""
import time
from divrank import _kernels
from divrank.harness import ExperimentConfig, run_experiment

cfg = ExperimentConfig(scenario="two-peak", docs_log2=8, slots=3, rounds={rounds},
                       algos=("rankedMCZooming+",), seeds=1, cadence=1000)
t0 = time.perf_counter()
run_experiment(cfg)
dt = time.perf_counter() - t0
print(f"{{_kernels.backend():>6s}} backend: {{cfg.rounds / dt:10.0f}} rounds/s "
      f"({{dt:.2f}} s for {{cfg.rounds}} rounds x 3 slots)")
"""


def bench_pair(name, jit_fn, np_fn, args, number=2000):
    jit_fn(*args)  # trigger compilation outside the timer
    t_jit = timeit.timeit(lambda: jit_fn(*args), number=number) / number
    t_np = timeit.timeit(lambda: np_fn(*args), number=number) / number
    print(f"  {name:18s} numba {t_jit * 1e6:8.2f} us   numpy {t_np * 1e6:8.2f} us "
          f"  speedup x{t_np / t_jit:5.1f}", flush=True)


def micro():
    print("kernel microbenchmarks (typical policy-sized inputs):", flush=True)
    rng = np.random.default_rng(0)
    m = 512
    n = rng.integers(0, 50, size=m).astype(np.float64)
    r = np.minimum(n, rng.integers(0, 50, size=m)).astype(np.float64)
    width = rng.uniform(0, 1, size=m)
    ids = np.arange(m, dtype=np.int64)
    caps = rng.uniform(0, 2, size=m)
    bench_pair("select_max_index",
               K._select_max_index_loop if not K.NUMBA_ENABLED else K.select_max_index,
               K._select_max_index_np,
               (n, r, width, m, 4.0, 2.0, ids, caps, True))

    tree = build_balanced_tree(2, 10, 0.837)
    us = rng.random(tree.height + 1)
    bench_pair("descend_uniform",
               K.descend_uniform if K.NUMBA_ENABLED else K._descend_uniform_loop,
               K._descend_uniform_np,
               (tree.child_start, tree.child_list, 0, us))

    marked = np.zeros(tree.n_nodes, dtype=np.bool_)
    for y in tree.leaf_ids[:5]:
        v = int(y)
        while v >= 0 and not marked[v]:
            marked[v] = True
            v = int(tree.parent[v])
    nodes = rng.integers(0, tree.n_nodes, size=m).astype(np.int64)
    out = np.empty(m)
    bench_pair("set_caps",
               K.set_caps if K.NUMBA_ENABLED else K._set_caps_loop,
               K._set_caps_np,
               (tree.parent, tree.depth, marked, nodes, m, 0.837, 1.0, out))

    q0 = rng.uniform(0, 0.3, size=tree.n_nodes)
    q1 = rng.uniform(0, 0.3, size=tree.n_nodes)
    us_n = rng.random(tree.n_nodes)
    bits = np.empty(tree.n_nodes, dtype=np.uint8)
    bench_pair("sample_bits",
               K.sample_bits if K.NUMBA_ENABLED else K._sample_bits_loop,
               K._sample_bits_np,
               (tree.bfs_order, tree.level_start, tree.parent, q0, q1, 1, us_n, bits),
               number=500)

    w = rng.uniform(0.5, 2.0, size=m)
    p = np.empty(m)
    bench_pair("exp3_probs",
               K.exp3_probs if K.NUMBA_ENABLED else K._exp3_probs_loop,
               K._exp3_probs_np, (w, m, 0.3, p))


def end_to_end(rounds):
    print("\nend-to-end simulation (separate processes):", flush=True)
    for flag in ("1", "0"):
        env = dict(os.environ, DIVRANK_NUMBA=flag)
        subprocess.run([sys.executable, "-c", _END_TO_END.format(rounds=rounds)],
                       env=env, check=True)


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--rounds", type=int, default=30_000)
    args = ap.parse_args()
    if not K.NUMBA_ENABLED:
        print("note: DIVRANK_NUMBA=0 in this process; microbenchmarks compare "
              "the uncompiled loop against numpy")
    micro()
    end_to_end(args.rounds)
