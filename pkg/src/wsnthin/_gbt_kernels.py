"""Compiled kernels for tree growth and prediction.

Trees are stored as flat arrays indexed by node id; ``feature == -1`` marks a
leaf. A sample goes left when ``x <= threshold``; NaN follows the node's
default direction.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _score(g, h, lam):
    d = h + lam
    if d <= 0.0:
        return 0.0
    return g * g / d


@njit(cache=True, nogil=True)
def grow_tree(X, grad, row_node, order, oval, ostart, miss, mstart,
              max_depth, lam, gamma, lr, midpoint):
    """Grow one regression tree level by level with exact greedy splits.

    ``row_node`` holds 0 for rows taking part in this tree and -1 otherwise;
    it is modified in place. ``order``/``ostart`` list, per feature, the rows
    with a present value sorted ascending (``oval`` holds those values);
    ``miss``/``mstart`` list the rows where the feature is missing.
    """
    n, n_feat = X.shape
    cap = 2 ** (max_depth + 1) - 1
    feat = np.full(cap, -1, np.int32)
    thr = np.zeros(cap)
    dleft = np.ones(cap, np.bool_)
    left = np.full(cap, -1, np.int32)
    right = np.full(cap, -1, np.int32)
    value = np.zeros(cap)
    G = np.zeros(cap)
    H = np.zeros(cap)

    for r in range(n):
        if row_node[r] == 0:
            G[0] += grad[r]
            H[0] += 1.0
    n_nodes = 1
    lo = 0
    hi = 1
    for depth in range(max_depth):
        m = hi - lo
        best_gain = np.full(m, -np.inf)
        best_f = np.full(m, -1, np.int64)
        best_thr = np.zeros(m)
        best_dl = np.ones(m, np.bool_)
        GL = np.zeros(m)
        HL = np.zeros(m)
        Gm = np.zeros(m)
        Hm = np.zeros(m)
        last = np.zeros(m)
        parent = np.zeros(m)
        for j in range(m):
            parent[j] = _score(G[lo + j], H[lo + j], lam)

        for f in range(n_feat):
            Gm[:] = 0.0
            Hm[:] = 0.0
            GL[:] = 0.0
            HL[:] = 0.0
            for idx in range(mstart[f], mstart[f + 1]):
                r = miss[idx]
                k = row_node[r]
                if k >= lo and k < hi:
                    Gm[k - lo] += grad[r]
                    Hm[k - lo] += 1.0
            for idx in range(ostart[f], ostart[f + 1]):
                r = order[idx]
                k = row_node[r]
                if k < lo or k >= hi:
                    continue
                j = k - lo
                x = oval[idx]
                if HL[j] > 0.0 and x > last[j]:
                    gp = G[k] - Gm[j]
                    hp = H[k] - Hm[j]
                    gr = gp - GL[j]
                    hr = hp - HL[j]
                    if midpoint:
                        t = 0.5 * (last[j] + x)
                        if not t < x:
                            t = last[j]
                    else:
                        t = last[j]
                    # missing rows to the left
                    gain = (_score(GL[j] + Gm[j], HL[j] + Hm[j], lam)
                            + _score(gr, hr, lam) - parent[j])
                    if gain > best_gain[j]:
                        best_gain[j] = gain
                        best_f[j] = f
                        best_thr[j] = t
                        best_dl[j] = True
                    if Hm[j] > 0.0:
                        gain = (_score(GL[j], HL[j], lam)
                                + _score(gr + Gm[j], hr + Hm[j], lam) - parent[j])
                        if gain > best_gain[j]:
                            best_gain[j] = gain
                            best_f[j] = f
                            best_thr[j] = t
                            best_dl[j] = False
                GL[j] += grad[r]
                HL[j] += 1.0
                last[j] = x
            # present vs missing
            for j in range(m):
                if HL[j] > 0.0 and Hm[j] > 0.0:
                    gain = _score(GL[j], HL[j], lam) + _score(Gm[j], Hm[j], lam) - parent[j]
                    if gain > best_gain[j]:
                        best_gain[j] = gain
                        best_f[j] = f
                        best_thr[j] = np.inf
                        best_dl[j] = False

        any_split = False
        for j in range(m):
            k = lo + j
            tol = 1e-12 * (1.0 + abs(parent[j]))
            if best_f[j] >= 0 and best_gain[j] > gamma and best_gain[j] > tol:
                feat[k] = best_f[j]
                thr[k] = best_thr[j]
                dleft[k] = best_dl[j]
                left[k] = n_nodes
                right[k] = n_nodes + 1
                n_nodes += 2
                any_split = True
        if not any_split:
            break
        for r in range(n):
            k = row_node[r]
            if k < lo or k >= hi or feat[k] < 0:
                continue
            x = X[r, feat[k]]
            if np.isnan(x):
                c = left[k] if dleft[k] else right[k]
            elif x <= thr[k]:
                c = left[k]
            else:
                c = right[k]
            row_node[r] = c
            G[c] += grad[r]
            H[c] += 1.0
        lo = hi
        hi = n_nodes

    for k in range(n_nodes):
        if feat[k] < 0:
            d = H[k] + lam
            value[k] = lr * G[k] / d if d > 0.0 else 0.0
    return (feat[:n_nodes].copy(), thr[:n_nodes].copy(), dleft[:n_nodes].copy(),
            left[:n_nodes].copy(), right[:n_nodes].copy(), value[:n_nodes].copy())


@njit(cache=True, nogil=True)
def add_tree_prediction(X, feat, thr, dleft, left, right, value, out):
    for r in range(X.shape[0]):
        k = 0
        while feat[k] >= 0:
            x = X[r, feat[k]]
            if np.isnan(x):
                k = left[k] if dleft[k] else right[k]
            elif x <= thr[k]:
                k = left[k]
            else:
                k = right[k]
        out[r] += value[k]


@njit(cache=True, nogil=True)
def predict_packed(X, base, offsets, n_trees, feat, thr, dleft, left, right, value):
    """Sum leaf values of the first ``n_trees`` packed trees; child ids are tree-local."""
    n = X.shape[0]
    out = np.full(n, base)
    for r in range(n):
        acc = base
        for t in range(n_trees):
            o = offsets[t]
            k = 0
            while feat[o + k] >= 0:
                x = X[r, feat[o + k]]
                if np.isnan(x):
                    k = left[o + k] if dleft[o + k] else right[o + k]
                elif x <= thr[o + k]:
                    k = left[o + k]
                else:
                    k = right[o + k]
            acc += value[o + k]
        out[r] = acc
    return out
