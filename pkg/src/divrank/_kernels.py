"""Hot numeric kernels shared by the bandit policies and the user sampler.

Each kernel exists twice: a scalar-loop version that numba compiles with
``@njit`` and a vectorized numpy version. The active backend is chosen once at
import time from the ``DIVRANK_NUMBA`` environment variable ("0" selects the
numpy fallback). ``benchmarks/bench_backends.py`` times the two side by side.

All kernels operate on caller-owned flat arrays and allocate nothing beyond
scalars, so they are safe to call hundreds of thousands of times per run.
"""

from __future__ import annotations

import math
import os

import numpy as np

NUMBA_ENABLED = os.environ.get("DIVRANK_NUMBA", "1").lower() not in ("0", "false", "off")

if NUMBA_ENABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False


def backend() -> str:
    """Name of the active kernel backend ("numba" or "numpy")."""
    return "numba" if NUMBA_ENABLED else "numpy"


# ---------------------------------------------------------------------------
# loop bodies (numba-compilable subset)
# ---------------------------------------------------------------------------


def _select_max_index_loop(n, r, width, m, factor, coeff, ids, caps, use_caps):
    # index_i = width_i + mean_i + coeff * sqrt(factor / (1 + n_i)), optionally
    # capped; ties broken by the smallest id. Unplayed entries use mean 0.
    best = -1
    best_val = 0.0
    best_id = 0
    for i in range(m):
        if n[i] > 0.0:
            mean = r[i] / n[i]
        else:
            mean = 0.0
        val = width[i] + mean + coeff * math.sqrt(factor / (1.0 + n[i]))
        if use_caps and caps[i] < val:
            val = caps[i]
        if best < 0 or val > best_val or (val == best_val and ids[i] < best_id):
            best = i
            best_val = val
            best_id = ids[i]
    return best


def _descend_uniform_loop(child_start, child_list, node, us):
    # Walk down from `node`, picking uniformly among children, until a leaf.
    # `us` must hold at least `height` uniforms.
    k = 0
    while True:
        lo = child_start[node]
        hi = child_start[node + 1]
        cnt = hi - lo
        if cnt == 0:
            return node
        j = int(us[k] * cnt)
        if j >= cnt:
            j = cnt - 1
        node = child_list[lo + j]
        k += 1


def _set_caps_loop(parent, depth, marked, active_nodes, m, eps, c, out):
    # For every active node, distance cap against the marked ancestor set:
    # walk up to the first marked node a and emit c * eps**depth(a). The root
    # must be marked, which holds whenever the marking came from a non-empty
    # leaf set.
    for i in range(m):
        v = active_nodes[i]
        while not marked[v]:
            v = parent[v]
        out[i] = c * eps ** depth[v]


def _sample_bits_loop(order, level_start, parent, q0, q1, root_bit, us, out):
    # `order` lists nodes parents-first; us[i] drives node order[i].
    # `level_start` bounds the per-depth runs (only the numpy twin needs it).
    out[order[0]] = root_bit
    for i in range(1, order.shape[0]):
        v = order[i]
        b = out[parent[v]]
        q = q1[v] if b == 1 else q0[v]
        if us[i] < q:
            out[v] = 1 - b
        else:
            out[v] = b


def _exp3_probs_loop(w, m, gamma, out):
    s = 0.0
    for i in range(m):
        s += w[i]
    base = gamma / m
    for i in range(m):
        out[i] = (1.0 - gamma) * w[i] / s + base
    return s


def _weighted_choice_loop(p, m, u):
    acc = 0.0
    for i in range(m):
        acc += p[i]
        if u < acc:
            return i
    return m - 1


# ---------------------------------------------------------------------------
# numpy fallbacks
# ---------------------------------------------------------------------------


def _select_max_index_np(n, r, width, m, factor, coeff, ids, caps, use_caps):
    nn = n[:m]
    mean = np.divide(r[:m], nn, out=np.zeros(m), where=nn > 0.0)
    val = width[:m] + mean + coeff * np.sqrt(factor / (1.0 + nn))
    if use_caps:
        val = np.minimum(val, caps[:m])
    tied = np.flatnonzero(val == val.max())
    return int(tied[np.argmin(ids[:m][tied])])


def _descend_uniform_np(child_start, child_list, node, us):
    k = 0
    while True:
        lo = int(child_start[node])
        cnt = int(child_start[node + 1]) - lo
        if cnt == 0:
            return node
        j = min(int(us[k] * cnt), cnt - 1)
        node = int(child_list[lo + j])
        k += 1


def _set_caps_np(parent, depth, marked, active_nodes, m, eps, c, out):
    cur = active_nodes[:m].astype(np.int64, copy=True)
    unresolved = ~marked[cur]
    while unresolved.any():
        cur[unresolved] = parent[cur[unresolved]]
        unresolved = ~marked[cur]
    out[:m] = c * eps ** depth[cur]


def _sample_bits_np(order, level_start, parent, q0, q1, root_bit, us, out):
    # Mutation draws are independent across nodes, so levels vectorize; the
    # BFS order groups each depth into one contiguous run.
    out[order[0]] = root_bit
    for lvl in range(1, level_start.shape[0] - 1):
        i, j = level_start[lvl], level_start[lvl + 1]
        seg = order[i:j]
        b = out[parent[seg]]
        q = np.where(b == 1, q1[seg], q0[seg])
        out[seg] = np.where(us[i:j] < q, 1 - b, b)


def _exp3_probs_np(w, m, gamma, out):
    s = float(w[:m].sum())
    out[:m] = (1.0 - gamma) * w[:m] / s + gamma / m
    return s


def _weighted_choice_np(p, m, u):
    acc = np.cumsum(p[:m])
    return int(min(np.searchsorted(acc, u, side="right"), m - 1))


if NUMBA_ENABLED:
    select_max_index = njit(cache=True)(_select_max_index_loop)
    descend_uniform = njit(cache=True)(_descend_uniform_loop)
    set_caps = njit(cache=True)(_set_caps_loop)
    sample_bits = njit(cache=True)(_sample_bits_loop)
    exp3_probs = njit(cache=True)(_exp3_probs_loop)
    weighted_choice = njit(cache=True)(_weighted_choice_loop)
else:
    select_max_index = _select_max_index_np
    descend_uniform = _descend_uniform_np
    set_caps = _set_caps_np
    sample_bits = _sample_bits_np
    exp3_probs = _exp3_probs_np
    weighted_choice = _weighted_choice_np
