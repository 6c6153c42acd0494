"""Random forest engine: bagged Gini trees over quantile-binned features.

Feature values are binned once per fit into at most 256 quantile bins; tree
growth then scans bin histograms for the best Gini split, which is what makes
fitting fast enough to sit inside a wrapper feature-selection loop. When a
feature has at most 255 distinct training values the binning is lossless and
splits are exact. Split thresholds are stored as real values, so prediction
works on raw (un-binned) inputs.

All randomness (bootstrap resampling, per-node feature subsets) is drawn
outside the jitted kernels from a seeded generator, so concurrent fits from
worker threads stay deterministic.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

MAX_BINS = 256


def bin_features(X: np.ndarray):
    """Quantile-bin each column of X.

    Returns (binned uint8 matrix, edges float64 (p, 256), n_edges per column).
    Bin b contains values x with edges[b-1] < x <= edges[b]; a split at bin s
    sends x left iff x <= edges[s].
    """
    n, p = X.shape
    binned = np.empty((n, p), dtype=np.uint8)
    edges = np.zeros((p, MAX_BINS), dtype=np.float64)
    n_edges = np.zeros(p, dtype=np.int32)
    qs = np.linspace(0.0, 1.0, MAX_BINS + 1)[1:-1]
    for j in range(p):
        col = X[:, j]
        uniq = np.unique(col)
        if uniq.size <= MAX_BINS - 1:
            cuts = uniq[:-1] if uniq.size > 1 else uniq[:0]
        else:
            cuts = np.unique(np.quantile(col, qs))
            if cuts.size and cuts[-1] >= uniq[-1]:
                cuts = cuts[:-1]
        binned[:, j] = np.searchsorted(cuts, col, side="left")
        edges[j, : cuts.size] = cuts
        n_edges[j] = cuts.size
    return binned, edges, n_edges


@njit(cache=True, nogil=True)
def grow_forest(binned, edges, y, boot, feat_rand, m_features, min_leaf):
    """Grow a forest of fully-developed Gini trees over binned features.

    boot: (n_trees, n) bootstrap sample indices.
    feat_rand: (n_trees, n + 1, m_features) uint32 randomness for per-node
        feature subsampling (partial Fisher-Yates); consumed per split attempt
        and indexed modulo n + 1, since failed attempts can outnumber splits.
    Returns flat node arrays (feature, threshold, left, right, leaf value).
    """
    n_trees = boot.shape[0]
    n = binned.shape[0]
    p = binned.shape[1]
    max_nodes = 2 * n + 1

    node_feat = np.full((n_trees, max_nodes), -1, np.int32)
    node_thr = np.zeros((n_trees, max_nodes), np.float64)
    node_left = np.full((n_trees, max_nodes), -1, np.int32)
    node_right = np.full((n_trees, max_nodes), -1, np.int32)
    node_value = np.zeros((n_trees, max_nodes), np.int8)

    idx = np.empty(n, np.int32)
    tmp = np.empty(n, np.int32)
    stack_node = np.empty(2 * n + 8, np.int32)
    stack_lo = np.empty(2 * n + 8, np.int32)
    stack_hi = np.empty(2 * n + 8, np.int32)
    feat_buf = np.empty(p, np.int32)
    hist_tot = np.empty(MAX_BINS, np.int64)
    hist_pos = np.empty(MAX_BINS, np.int64)

    for t in range(n_trees):
        for i in range(n):
            idx[i] = boot[t, i]
        n_nodes = 1
        n_attempts = 0
        sp = 0
        stack_node[0] = 0
        stack_lo[0] = 0
        stack_hi[0] = n
        while sp >= 0:
            node = stack_node[sp]
            lo = stack_lo[sp]
            hi = stack_hi[sp]
            sp -= 1
            n_node = hi - lo
            n_pos = 0
            for i in range(lo, hi):
                n_pos += y[idx[i]]
            if n_pos == 0 or n_pos == n_node or n_node < 2 * min_leaf:
                node_value[t, node] = 1 if 2 * n_pos > n_node else 0
                continue

            # Sample m distinct candidate features for this node.
            rand_row = n_attempts % (n + 1)
            for j in range(p):
                feat_buf[j] = j
            for j in range(m_features):
                r = feat_rand[t, rand_row, j] % np.uint32(p - j)
                k = j + np.int32(r)
                swap = feat_buf[j]
                feat_buf[j] = feat_buf[k]
                feat_buf[k] = swap

            best_gain = -1.0
            best_f = -1
            best_s = -1
            for j in range(m_features):
                f = feat_buf[j]
                bmin = MAX_BINS
                bmax = -1
                for i in range(lo, hi):
                    b = binned[idx[i], f]
                    if b < bmin:
                        bmin = b
                    if b > bmax:
                        bmax = b
                if bmin == bmax:
                    continue
                for b in range(bmin, bmax + 1):
                    hist_tot[b] = 0
                    hist_pos[b] = 0
                for i in range(lo, hi):
                    b = binned[idx[i], f]
                    hist_tot[b] += 1
                    hist_pos[b] += y[idx[i]]
                nl = 0
                pl = 0
                for s in range(bmin, bmax):
                    nl += hist_tot[s]
                    pl += hist_pos[s]
                    nr = n_node - nl
                    if nl < min_leaf or nr < min_leaf:
                        continue
                    pr = n_pos - pl
                    # Maximizing sum of squared class counts over node size is
                    # equivalent to minimizing the weighted Gini impurity.
                    gain = (pl * pl + (nl - pl) * (nl - pl)) / nl + (
                        pr * pr + (nr - pr) * (nr - pr)
                    ) / nr
                    if gain > best_gain:
                        best_gain = gain
                        best_f = f
                        best_s = s
            n_attempts += 1
            if best_f < 0:
                node_value[t, node] = 1 if 2 * n_pos > n_node else 0
                continue

            a = lo
            nb = 0
            for i in range(lo, hi):
                if binned[idx[i], best_f] <= best_s:
                    idx[a] = idx[i]
                    a += 1
                else:
                    tmp[nb] = idx[i]
                    nb += 1
            for i in range(nb):
                idx[a + i] = tmp[i]

            lc = n_nodes
            rc = n_nodes + 1
            n_nodes += 2
            node_feat[t, node] = best_f
            node_thr[t, node] = edges[best_f, best_s]
            node_left[t, node] = lc
            node_right[t, node] = rc
            sp += 1
            stack_node[sp] = rc
            stack_lo[sp] = a
            stack_hi[sp] = hi
            sp += 1
            stack_node[sp] = lc
            stack_lo[sp] = lo
            stack_hi[sp] = a

    return node_feat, node_thr, node_left, node_right, node_value


@njit(cache=True, nogil=True)
def predict_forest(X, node_feat, node_thr, node_left, node_right, node_value):
    """Majority vote over the trees; exact ties resolve to class 0."""
    n_trees = node_feat.shape[0]
    n = X.shape[0]
    votes = np.zeros(n, np.int32)
    for t in range(n_trees):
        for i in range(n):
            node = 0
            while node_feat[t, node] >= 0:
                if X[i, node_feat[t, node]] <= node_thr[t, node]:
                    node = node_left[t, node]
                else:
                    node = node_right[t, node]
            votes[i] += node_value[t, node]
    out = np.zeros(n, np.int8)
    for i in range(n):
        if 2 * votes[i] > n_trees:
            out[i] = 1
    return out


class ForestModel:
    """Fitted forest: flat node arrays plus the training feature count."""

    __slots__ = ("node_feat", "node_thr", "node_left", "node_right", "node_value",
                 "n_features")

    def __init__(self, node_feat, node_thr, node_left, node_right, node_value,
                 n_features):
        self.node_feat = node_feat
        self.node_thr = node_thr
        self.node_left = node_left
        self.node_right = node_right
        self.node_value = node_value
        self.n_features = n_features


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    n_trees: int = 100,
    min_leaf: int = 1,
    seed: int = 0,
) -> ForestModel:
    """Fit a seeded bagging forest; feature subset size is ceil(sqrt(p))."""
    n, p = X.shape
    m = int(math.ceil(math.sqrt(p)))
    rng = np.random.default_rng(seed)
    boot = rng.integers(0, n, size=(n_trees, n), dtype=np.int32)
    feat_rand = rng.integers(
        0, np.iinfo(np.uint32).max, size=(n_trees, n + 1, m), dtype=np.uint32
    )
    binned, edges, _ = bin_features(np.asarray(X, dtype=np.float64))
    arrays = grow_forest(
        binned, edges, np.asarray(y, dtype=np.int8), boot, feat_rand, m, min_leaf
    )
    return ForestModel(*arrays, n_features=p)


def forest_predict(model: ForestModel, X: np.ndarray) -> np.ndarray:
    return predict_forest(
        np.ascontiguousarray(X, dtype=np.float64),
        model.node_feat,
        model.node_thr,
        model.node_left,
        model.node_right,
        model.node_value,
    )
