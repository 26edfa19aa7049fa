"""Compiled kernels for weighted Gini trees over pre-binned integer features.

Features are binned once per forest: bin ``b`` of feature ``f`` holds the
``b``-th smallest distinct training value. A split ``bin <= b`` is stored
as a real threshold halfway between the last occupied left bin and the
first occupied right bin, so prediction works on raw values.

Randomness inside a tree comes from a per-tree splitmix64 stream, which
keeps every tree reproducible no matter how many threads build the forest.
"""

import os

import numba
import numpy as np
from numba import njit, prange

if "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
    # prefer OpenMP: thread-safe for concurrent callers, and avoids probing old TBB builds
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True)
def _next_u64(state):
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _randbelow(state, k):
    return np.int64(_next_u64(state) % np.uint64(k))


@njit(cache=True)
def build_tree(xb, nbins, bin_values, y, w, max_depth, min_leaf, mtry, seed,
               feat, thr, left, right, value, nweight, importance):
    """Grow one tree into the preallocated node arrays; return the node count.

    xb is (n_features, n_samples) bin codes; samples with w == 0 are ignored.
    importance receives the weighted impurity decrease per feature.
    """
    n_features = xb.shape[0]
    idx = np.flatnonzero(w > 0)
    n_active = idx.shape[0]
    state = np.empty(1, dtype=np.uint64)
    state[0] = seed

    max_bins = 1
    for f in range(n_features):
        if nbins[f] > max_bins:
            max_bins = nbins[f]
    hp = np.zeros(max_bins)
    hn = np.zeros(max_bins)
    perm = np.arange(n_features)

    # explicit stack of (start, end, depth, node id)
    st_start = np.empty(2 * n_active + 2, dtype=np.int64)
    st_end = np.empty_like(st_start)
    st_depth = np.empty_like(st_start)
    st_node = np.empty_like(st_start)
    top = 0
    st_start[0] = 0
    st_end[0] = n_active
    st_depth[0] = 0
    st_node[0] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]
        node = st_node[top]

        wp = 0.0
        wn = 0.0
        for k in range(start, end):
            i = idx[k]
            if y[i] == 1:
                wp += w[i]
            else:
                wn += w[i]
        wt = wp + wn
        value[node] = wp / wt
        nweight[node] = wt
        feat[node] = -1
        left[node] = -1
        right[node] = -1

        if wp == 0.0 or wn == 0.0:
            continue
        if max_depth >= 0 and depth >= max_depth:
            continue
        if wt < 2.0 * min_leaf:
            continue
        if feat.shape[0] - n_nodes < 2:
            continue

        parent = 2.0 * wp * wn / wt
        best_gain = 1e-12 * wt
        best_f = -1
        best_b = -1
        best_br = -1
        visited = 0
        informative = 0
        while visited < n_features and informative < mtry:
            j = visited + _randbelow(state, n_features - visited)
            tmp = perm[visited]
            perm[visited] = perm[j]
            perm[j] = tmp
            f = perm[visited]
            visited += 1
            nb = nbins[f]
            if nb < 2:
                continue
            for b in range(nb):
                hp[b] = 0.0
                hn[b] = 0.0
            for k in range(start, end):
                i = idx[k]
                b = xb[f, i]
                if y[i] == 1:
                    hp[b] += w[i]
                else:
                    hn[b] += w[i]
            occupied = 0
            for b in range(nb):
                if hp[b] + hn[b] > 0.0:
                    occupied += 1
            if occupied < 2:
                continue
            informative += 1

            lp = 0.0
            ln = 0.0
            seen = 0
            for b in range(nb):
                if hp[b] + hn[b] == 0.0:
                    continue
                seen += 1
                if seen == occupied:
                    break
                lp += hp[b]
                ln += hn[b]
                wl = lp + ln
                wr = wt - wl
                if wl < min_leaf or wr < min_leaf:
                    continue
                rp = wp - lp
                rn = wn - ln
                gain = parent - 2.0 * lp * ln / wl - 2.0 * rp * rn / wr
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_b = b
                    br = b + 1
                    while hp[br] + hn[br] == 0.0:
                        br += 1
                    best_br = br

        if best_f < 0:
            continue

        # partition idx[start:end] so that left samples come first
        lo = start
        hi = end - 1
        while lo <= hi:
            if xb[best_f, idx[lo]] <= best_b:
                lo += 1
            else:
                tmp = idx[lo]
                idx[lo] = idx[hi]
                idx[hi] = tmp
                hi -= 1
        mid = lo

        feat[node] = best_f
        thr[node] = 0.5 * (bin_values[best_f, best_b] + bin_values[best_f, best_br])
        importance[best_f] += best_gain
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode

        st_start[top] = mid
        st_end[top] = end
        st_depth[top] = depth + 1
        st_node[top] = rnode
        top += 1
        st_start[top] = start
        st_end[top] = mid
        st_depth[top] = depth + 1
        st_node[top] = lnode
        top += 1

    return n_nodes


@njit(parallel=True, cache=True)
def build_forest(xb, nbins, bin_values, y, tree_weights, max_depth, min_leaf, mtry, seeds, max_nodes):
    n_trees = tree_weights.shape[0]
    n_features = xb.shape[0]
    feat = np.full((n_trees, max_nodes), -1, dtype=np.int32)
    thr = np.zeros((n_trees, max_nodes))
    left = np.full((n_trees, max_nodes), -1, dtype=np.int32)
    right = np.full((n_trees, max_nodes), -1, dtype=np.int32)
    value = np.zeros((n_trees, max_nodes))
    nweight = np.zeros((n_trees, max_nodes))
    importance = np.zeros((n_trees, n_features))
    counts = np.zeros(n_trees, dtype=np.int64)
    for t in prange(n_trees):
        counts[t] = build_tree(xb, nbins, bin_values, y, tree_weights[t], max_depth, min_leaf, mtry,
                               seeds[t], feat[t], thr[t], left[t], right[t], value[t], nweight[t],
                               importance[t])
    return feat, thr, left, right, value, nweight, importance, counts


@njit(parallel=True, cache=True)
def predict_forest(x, roots, feat, thr, left, right, value):
    """Mean leaf positive-class probability across trees, for each row of x."""
    n = x.shape[0]
    n_trees = roots.shape[0]
    out = np.zeros(n)
    for r in prange(n):
        s = 0.0
        for t in range(n_trees):
            node = roots[t]
            while feat[node] >= 0:
                if x[r, feat[node]] <= thr[node]:
                    node = left[node]
                else:
                    node = right[node]
            s += value[node]
        out[r] = s / n_trees
    return out
