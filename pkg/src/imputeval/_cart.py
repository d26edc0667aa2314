"""Compiled CART kernels.

Trees are stored as flat arrays. Internal nodes send a row left when
``x[feature] <= threshold`` (numeric) or ``x[feature] == threshold``
(categorical one-vs-rest). ``leaf_rows[leaf_start[v]:leaf_start[v] + leaf_len[v]]``
lists the bootstrap rows that reached leaf ``v``.
"""

import numpy as np
from numba import njit

LEAF = -1


@njit(cache=True)
def _score_numeric(xs, ys, yc, n_classes, min_node):
    # xs sorted; ys/yc the matching targets. Returns (best score, split pos).
    m = xs.shape[0]
    best = -np.inf
    pos = -1
    if n_classes == 0:
        total = 0.0
        for i in range(m):
            total += ys[i]
        left = 0.0
        for i in range(m - 1):
            left += ys[i]
            if xs[i] == xs[i + 1]:
                continue
            nl = i + 1
            nr = m - nl
            if nl < min_node or nr < min_node:
                continue
            right = total - left
            s = left * left / nl + right * right / nr
            if s > best:
                best = s
                pos = i
    else:
        tot = np.zeros(n_classes)
        for i in range(m):
            tot[yc[i]] += 1.0
        cl = np.zeros(n_classes)
        for i in range(m - 1):
            cl[yc[i]] += 1.0
            if xs[i] == xs[i + 1]:
                continue
            nl = i + 1
            nr = m - nl
            if nl < min_node or nr < min_node:
                continue
            sl = 0.0
            sr = 0.0
            for c in range(n_classes):
                sl += cl[c] * cl[c]
                d = tot[c] - cl[c]
                sr += d * d
            s = sl / nl + sr / nr
            if s > best:
                best = s
                pos = i
    return best, pos


@njit(cache=True)
def _score_categorical(codes, ys, yc, n_levels, n_classes, min_node):
    # One-vs-rest splits: level L against all other levels.
    m = codes.shape[0]
    cnt = np.zeros(n_levels)
    best = -np.inf
    level = -1
    if n_classes == 0:
        sums = np.zeros(n_levels)
        total = 0.0
        for i in range(m):
            cnt[codes[i]] += 1.0
            sums[codes[i]] += ys[i]
            total += ys[i]
        for lv in range(n_levels):
            nl = cnt[lv]
            nr = m - nl
            if nl < min_node or nr < min_node or nl == 0 or nr == 0:
                continue
            right = total - sums[lv]
            s = sums[lv] * sums[lv] / nl + right * right / nr
            if s > best:
                best = s
                level = lv
    else:
        tab = np.zeros((n_levels, n_classes))
        tot = np.zeros(n_classes)
        for i in range(m):
            cnt[codes[i]] += 1.0
            tab[codes[i], yc[i]] += 1.0
            tot[yc[i]] += 1.0
        for lv in range(n_levels):
            nl = cnt[lv]
            nr = m - nl
            if nl < min_node or nr < min_node or nl == 0 or nr == 0:
                continue
            sl = 0.0
            sr = 0.0
            for c in range(n_classes):
                sl += tab[lv, c] * tab[lv, c]
                d = tot[c] - tab[lv, c]
                sr += d * d
            s = sl / nl + sr / nr
            if s > best:
                best = s
                level = lv
    return best, level


@njit(cache=True)
def _stable_partition(a, lo, hi, mid, go_left, tmp):
    k = lo
    b = 0
    for i in range(lo, hi):
        slot = a[i]
        if go_left[slot]:
            a[k] = slot
            k += 1
        else:
            tmp[b] = slot
            b += 1
    for i in range(b):
        a[mid + i] = tmp[i]


@njit(cache=True)
def build_tree(X, order, y, is_cat, n_levels, n_classes, rows, mtry, min_node, max_depth, seed):
    """Grow one tree on the multiset ``rows`` of ``(X, y)``.

    ``n_classes == 0`` selects regression (variance reduction); otherwise
    ``y`` holds class codes and Gini decrease is used. ``order[f]`` is the
    ascending sort order of column ``f`` over all rows of ``X``.

    Bootstrap draws are addressed by slot (position in ``rows``). Every
    numeric feature keeps its slots sorted by value; splitting a node
    partitions each of these lists stably, so no sorting happens per node.
    """
    np.random.seed(seed)
    n_all, p = X.shape
    n = rows.shape[0]
    cap = 2 * n + 1
    feature = np.full(cap, LEAF, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, LEAF, np.int64)
    right = np.full(cap, LEAF, np.int64)
    value = np.zeros(cap)
    ncls = max(n_classes, 1)
    class_counts = np.zeros((cap, ncls))
    leaf_start = np.zeros(cap, np.int64)
    leaf_len = np.zeros(cap, np.int64)

    yc = np.zeros(y.shape[0], np.int64)
    if n_classes > 0:
        for i in range(y.shape[0]):
            yc[i] = np.int64(y[i])

    # slots grouped by row, then laid out in each feature's value order
    mult = np.zeros(n_all, np.int64)
    for s_ in range(n):
        mult[rows[s_]] += 1
    first = np.zeros(n_all + 1, np.int64)
    for r in range(n_all):
        first[r + 1] = first[r] + mult[r]
    by_row = np.empty(n, np.int64)
    fill = first[:n_all].copy()
    for s_ in range(n):
        r = rows[s_]
        by_row[fill[r]] = s_
        fill[r] += 1
    sorted_slots = np.zeros((p, n), np.int64)
    for f in range(p):
        if is_cat[f]:
            continue
        pos = 0
        for k in range(n_all):
            r = order[f, k]
            for q in range(first[r], first[r + 1]):
                sorted_slots[f, pos] = by_row[q]
                pos += 1
    idx = np.arange(n)

    feats = np.arange(p)
    xs = np.empty(n)
    ys = np.empty(n)
    ycs = np.empty(n, np.int64)
    codes = np.empty(n, np.int64)
    tmp = np.empty(n, np.int64)
    go_left = np.zeros(n, np.bool_)
    counts = np.zeros(ncls)
    stack_node = np.zeros(cap, np.int64)
    stack_lo = np.zeros(cap, np.int64)
    stack_hi = np.zeros(cap, np.int64)
    stack_depth = np.zeros(cap, np.int64)
    stack_lo[0] = 0
    stack_hi[0] = n
    sp = 1
    n_nodes = 1

    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        lo = stack_lo[sp]
        hi = stack_hi[sp]
        depth = stack_depth[sp]
        m = hi - lo

        s = 0.0
        ss = 0.0
        counts[:] = 0.0
        for i in range(lo, hi):
            r = rows[idx[i]]
            v = y[r]
            s += v
            ss += v * v
            if n_classes > 0:
                counts[yc[r]] += 1.0
        if n_classes == 0:
            value[node] = s / m
            parent = s * s / m
            pure = ss - s * s / m <= 1e-12 * max(1.0, ss)
        else:
            best_c = 0
            for c in range(n_classes):
                class_counts[node, c] = counts[c]
                if counts[c] > counts[best_c]:
                    best_c = c
            value[node] = best_c
            parent = 0.0
            for c in range(n_classes):
                parent += counts[c] * counts[c]
            parent /= m
            pure = counts[best_c] == m

        can_split = (
            m >= 2 * min_node
            and m >= 2
            and not pure
            and (max_depth < 0 or depth < max_depth)
        )
        best = -np.inf
        best_f = -1
        best_thr = 0.0
        if can_split:
            # partial Fisher-Yates draw of mtry features
            for a in range(mtry):
                b = a + np.random.randint(0, p - a)
                t = feats[a]
                feats[a] = feats[b]
                feats[b] = t
            for a in range(mtry):
                f = feats[a]
                if is_cat[f]:
                    for i in range(m):
                        r = rows[idx[lo + i]]
                        codes[i] = np.int64(X[r, f])
                        ys[i] = y[r]
                        ycs[i] = yc[r]
                    sc, lv = _score_categorical(
                        codes[:m], ys[:m], ycs[:m], n_levels[f], n_classes, min_node
                    )
                    if lv >= 0 and sc > best:
                        best = sc
                        best_f = f
                        best_thr = lv
                else:
                    for i in range(m):
                        r = rows[sorted_slots[f, lo + i]]
                        xs[i] = X[r, f]
                        ys[i] = y[r]
                        ycs[i] = yc[r]
                    sc, pos = _score_numeric(xs[:m], ys[:m], ycs[:m], n_classes, min_node)
                    if pos >= 0 and sc > best:
                        best = sc
                        best_f = f
                        best_thr = 0.5 * (xs[pos] + xs[pos + 1])
                        if not best_thr < xs[pos + 1]:
                            best_thr = xs[pos]

        if best_f < 0 or best <= parent + 1e-12 * abs(parent):
            leaf_start[node] = lo
            leaf_len[node] = m
            continue

        cat = is_cat[best_f]
        n_left = 0
        for i in range(lo, hi):
            slot = idx[i]
            xv = X[rows[slot], best_f]
            gl = (xv == best_thr) if cat else (xv <= best_thr)
            go_left[slot] = gl
            if gl:
                n_left += 1
        mid = lo + n_left
        # stable partition of idx and of every numeric feature's sorted list
        _stable_partition(idx, lo, hi, mid, go_left, tmp)
        for f in range(p):
            if not is_cat[f]:
                _stable_partition(sorted_slots[f], lo, hi, mid, go_left, tmp)

        feature[node] = best_f
        threshold[node] = best_thr
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        stack_node[sp] = rnode
        stack_lo[sp] = mid
        stack_hi[sp] = hi
        stack_depth[sp] = depth + 1
        sp += 1
        stack_node[sp] = lnode
        stack_lo[sp] = lo
        stack_hi[sp] = mid
        stack_depth[sp] = depth + 1
        sp += 1

    leaf_rows = np.empty(n, np.int64)
    for i in range(n):
        leaf_rows[i] = rows[idx[i]]
    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        class_counts[:n_nodes].copy(),
        leaf_start[:n_nodes].copy(),
        leaf_len[:n_nodes].copy(),
        leaf_rows,
    )


@njit(cache=True)
def apply_tree(feature, threshold, left, right, is_cat, X):
    """Leaf index reached by every row of ``X``."""
    n = X.shape[0]
    out = np.empty(n, np.int64)
    for i in range(n):
        v = 0
        while feature[v] != LEAF:
            f = feature[v]
            if is_cat[f]:
                v = left[v] if X[i, f] == threshold[v] else right[v]
            else:
                v = left[v] if X[i, f] <= threshold[v] else right[v]
        out[i] = v
    return out
