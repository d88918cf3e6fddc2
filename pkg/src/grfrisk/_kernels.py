"""Compiled tree induction and traversal kernels.

Trees are stored flat: parallel node arrays with tree-local child indices and a
``offsets`` array marking where each tree starts. A leaf has ``feature == -1``.
"""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0

# smallest impurity decrease that counts as an improvement
MIN_GAIN = 1e-12


@njit(cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _next_u64(state):
    state[0] = state[0] + _GOLDEN
    return _mix(state[0])


@njit(cache=True, inline="always")
def _uniform(state):
    return (_next_u64(state) >> np.uint64(11)) * _INV53


@njit(cache=True, inline="always")
def _randbelow(state, n):
    k = np.int64(_uniform(state) * n)
    if k >= n:
        k = n - 1
    return k


@njit(cache=True)
def derive_seed(master, stream):
    """Independent 64-bit seed for sub-stream ``stream`` of ``master``."""
    s = np.uint64(master) ^ _mix(np.uint64(stream) * _GOLDEN + _GOLDEN)
    return _mix(s + _GOLDEN)


@njit(cache=True, inline="always")
def _gini(n1, n):
    if n == 0:
        return 0.0
    p = n1 / n
    return 2.0 * p * (1.0 - p)


@njit(cache=True)
def scan_feature(X, y, idx, start, end, f, min_leaf, parent_gini, vals_buf):
    """Best threshold of feature ``f`` over ``idx[start:end]``.

    Returns ``(gain, threshold, is_constant)``; gain is ``-1.0`` when no
    admissible threshold exists.
    """
    n = end - start
    for i in range(n):
        vals_buf[i] = X[idx[start + i], f]
    vals = vals_buf[:n]
    order = np.argsort(vals, kind="mergesort")
    lo = vals[order[0]]
    hi = vals[order[n - 1]]
    if lo == hi:
        return -1.0, 0.0, True

    n1_total = 0
    for i in range(n):
        n1_total += y[idx[start + i]]

    best_gain = -1.0
    best_thr = 0.0
    nl = 0
    n1l = 0
    for i in range(n - 1):
        r = order[i]
        nl += 1
        n1l += y[idx[start + r]]
        a = vals[r]
        b = vals[order[i + 1]]
        if a == b:
            continue
        nr = n - nl
        if nl < min_leaf or nr < min_leaf:
            continue
        gain = parent_gini - (nl / n) * _gini(n1l, nl) - (nr / n) * _gini(n1_total - n1l, nr)
        # thresholds ascend along the sweep, so strict > keeps the lowest on ties
        if gain > best_gain:
            best_gain = gain
            t = 0.5 * (a + b)
            if t >= b:
                t = a
            best_thr = t
    return best_gain, best_thr, False


@njit(cache=True)
def best_split_kernel(X, y, idx, features, min_leaf):
    """Exhaustive best split over ``features``; returns ``(feature, threshold, gain)``.

    ``feature`` is -1 when no split yields a positive decrease.
    """
    n = idx.shape[0]
    n1 = 0
    for i in range(n):
        n1 += y[idx[i]]
    g = _gini(n1, n)
    vals_buf = np.empty(n, dtype=np.float64)
    best_f = -1
    best_t = 0.0
    best_gain = MIN_GAIN
    for j in range(features.shape[0]):
        f = features[j]
        gain, t, const = scan_feature(X, y, idx, 0, n, f, min_leaf, g, vals_buf)
        if const:
            continue
        if gain > best_gain or (
            best_f >= 0 and gain == best_gain and (f < best_f or (f == best_f and t < best_t))
        ):
            best_gain = gain
            best_f = f
            best_t = t
    if best_f < 0:
        return -1, 0.0, 0.0
    return best_f, best_t, best_gain


@njit(cache=True)
def _build_tree(X, y, idx, mtry, min_leaf, max_depth, state,
                feat, thr, left, right, value, count, gain, base):
    """Grow one tree over ``idx`` (bootstrap rows); nodes written from ``base``.

    Returns the number of nodes written.
    """
    m = idx.shape[0]
    p = X.shape[1]
    perm = np.arange(p)
    vals_buf = np.empty(m, dtype=np.float64)

    stack_node = np.empty(m, dtype=np.int64)
    stack_start = np.empty(m, dtype=np.int64)
    stack_end = np.empty(m, dtype=np.int64)
    stack_depth = np.empty(m, dtype=np.int64)
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = m
    stack_depth[0] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]
        n = end - start
        n1 = 0
        for i in range(start, end):
            n1 += y[idx[i]]
        k = base + node
        value[k] = n1 / n
        count[k] = n
        feat[k] = -1
        thr[k] = 0.0
        left[k] = -1
        right[k] = -1
        gain[k] = 0.0

        if n1 == 0 or n1 == n or n < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
            continue

        g = _gini(n1, n)
        best_f = -1
        best_t = 0.0
        best_gain = MIN_GAIN
        visited = 0
        # draw features without replacement; constant ones do not count toward mtry
        for j in range(p):
            if visited >= mtry:
                break
            r = j + _randbelow(state, p - j)
            tmp = perm[j]
            perm[j] = perm[r]
            perm[r] = tmp
            f = perm[j]
            gn, t, const = scan_feature(X, y, idx, start, end, f, min_leaf, g, vals_buf)
            if const:
                continue
            visited += 1
            if gn > best_gain or (
                best_f >= 0 and gn == best_gain and (f < best_f or (f == best_f and t < best_t))
            ):
                best_gain = gn
                best_f = f
                best_t = t

        if best_f < 0:
            continue

        # partition idx[start:end] so that x <= t comes first
        i = start
        jj = end - 1
        while i <= jj:
            if X[idx[i], best_f] <= best_t:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[jj]
                idx[jj] = tmp
                jj -= 1
        mid = i

        nl = mid - start
        n1l = 0
        for q in range(start, mid):
            n1l += y[idx[q]]
        nr = n - nl
        gain[k] = n * g - nl * _gini(n1l, nl) - nr * _gini(n1 - n1l, nr)
        feat[k] = best_f
        thr[k] = best_t
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[k] = lnode
        right[k] = rnode

        # push right first so the left child is grown next
        stack_node[top] = rnode
        stack_start[top] = mid
        stack_end[top] = end
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = lnode
        stack_start[top] = start
        stack_end[top] = mid
        stack_depth[top] = depth + 1
        top += 1

    return n_nodes


@njit(cache=True, nogil=True)
def fit_forest_kernel(X, y, rows, n_trees, mtry, min_leaf, max_depth, seed):
    """Fit ``n_trees`` bootstrap trees on ``X[rows]``.

    Returns flat node arrays, tree offsets and the per-tree in-bag counts
    (shape ``n_trees x len(rows)``).
    """
    m = rows.shape[0]
    cap = n_trees * (2 * m - 1)
    feat = np.empty(cap, dtype=np.int32)
    thr = np.empty(cap, dtype=np.float64)
    left = np.empty(cap, dtype=np.int32)
    right = np.empty(cap, dtype=np.int32)
    value = np.empty(cap, dtype=np.float64)
    count = np.empty(cap, dtype=np.int32)
    gain = np.empty(cap, dtype=np.float64)
    offsets = np.zeros(n_trees + 1, dtype=np.int64)
    inbag = np.zeros((n_trees, m), dtype=np.int32)
    state = np.zeros(1, dtype=np.uint64)
    idx = np.empty(m, dtype=np.int64)

    for b in range(n_trees):
        state[0] = derive_seed(seed, b)
        for i in range(m):
            pos = _randbelow(state, m)
            inbag[b, pos] += 1
            idx[i] = rows[pos]
        used = _build_tree(X, y, idx, mtry, min_leaf, max_depth, state,
                           feat, thr, left, right, value, count, gain, offsets[b])
        offsets[b + 1] = offsets[b] + used

    total = offsets[n_trees]
    return (feat[:total].copy(), thr[:total].copy(), left[:total].copy(), right[:total].copy(),
            value[:total].copy(), count[:total].copy(), gain[:total].copy(), offsets, inbag)


@njit(cache=True, nogil=True)
def predict_kernel(feat, thr, left, right, value, offsets, Xq):
    n_trees = offsets.shape[0] - 1
    out = np.zeros(Xq.shape[0], dtype=np.float64)
    for q in range(Xq.shape[0]):
        s = 0.0
        for b in range(n_trees):
            base = offsets[b]
            k = 0
            while feat[base + k] >= 0:
                if Xq[q, feat[base + k]] <= thr[base + k]:
                    k = left[base + k]
                else:
                    k = right[base + k]
            s += value[base + k]
        out[q] = s / n_trees
    return out


@njit(cache=True, nogil=True)
def tree_outputs_kernel(feat, thr, left, right, value, offsets, x):
    """Leaf value of every tree for a single row."""
    n_trees = offsets.shape[0] - 1
    out = np.empty(n_trees, dtype=np.float64)
    for b in range(n_trees):
        base = offsets[b]
        k = 0
        while feat[base + k] >= 0:
            if x[feat[base + k]] <= thr[base + k]:
                k = left[base + k]
            else:
                k = right[base + k]
        out[b] = value[base + k]
    return out


@njit(cache=True)
def importance_kernel(feat, count, gain, offsets, n_features):
    out = np.zeros(n_features, dtype=np.float64)
    for b in range(offsets.shape[0] - 1):
        base = offsets[b]
        root_n = count[base]
        for k in range(base, offsets[b + 1]):
            if feat[k] >= 0:
                out[feat[k]] += gain[k] / root_n
    return out


@njit(cache=True, nogil=True)
def oob_kernel(feat, thr, left, right, value, offsets, X, inbag):
    """Out-of-bag mean prediction per training row; NaN where a row was always in-bag."""
    n_trees = offsets.shape[0] - 1
    n = X.shape[0]
    total = np.zeros(n, dtype=np.float64)
    hits = np.zeros(n, dtype=np.int64)
    for b in range(n_trees):
        base = offsets[b]
        for q in range(n):
            if inbag[b, q] > 0:
                continue
            k = 0
            while feat[base + k] >= 0:
                if X[q, feat[base + k]] <= thr[base + k]:
                    k = left[base + k]
                else:
                    k = right[base + k]
            total[q] += value[base + k]
            hits[q] += 1
    out = np.empty(n, dtype=np.float64)
    for q in range(n):
        out[q] = total[q] / hits[q] if hits[q] > 0 else np.nan
    return out
