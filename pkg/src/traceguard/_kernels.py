"""Hot numeric kernels: tree growth, tree application, graph traversal.

Two interchangeable implementations live here:

* a numba ``@njit`` fast path (loop-based source, compiled, cached), and
* a pure-numpy fallback (vectorized column scans, python node loop).

The fallback is selected when numba is unavailable or when the environment
variable ``TRACEGUARD_NO_NUMBA`` is set to 1/true/yes/on.  Both paths are
written to produce bit-identical outputs: sorts are stable mergesorts,
accumulations are sequential (np.cumsum has sequential semantics), score
expressions use the same operation order, and feature subsampling runs the
same xorshift64 generator.  ``tests/test_kernels.py`` enforces the parity;
``benchmarks/bench_kernels.py`` compares their speed.

Split semantics shared by every tree in the package:

* candidate thresholds are midpoints between consecutive distinct sorted
  values; a vector exactly on a threshold routes to the <= (left) branch;
* ties are broken toward the lowest column index, then lowest threshold
  (guaranteed by strict-improvement scans in ascending order);
* a split is accepted only if it strictly improves the node criterion.
"""

from __future__ import annotations

import os

import numpy as np

_MASK64 = (1 << 64) - 1


def _env_disabled() -> bool:
    return os.environ.get("TRACEGUARD_NO_NUMBA", "").strip().lower() in {
        "1", "true", "yes", "on",
    }


try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAS_NUMBA = False

    def njit(*args, **kwargs):  # type: ignore[misc]
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


USE_NUMBA = HAS_NUMBA and not _env_disabled()

# Leaf sentinel in flat tree arrays.
NO_FEATURE = -1


# ---------------------------------------------------------------------------
# xorshift64: the shared feature-subsampling generator
# ---------------------------------------------------------------------------

def _xs64_py(s: int) -> int:
    s = (s ^ (s << 13)) & _MASK64
    s = s ^ (s >> 7)
    s = (s ^ (s << 17)) & _MASK64
    return s


@njit(cache=True)
def _xs64_nb(s):
    s = s ^ (s << np.uint64(13))
    s = s ^ (s >> np.uint64(7))
    s = s ^ (s << np.uint64(17))
    return s


# ---------------------------------------------------------------------------
# classification tree growth (weighted Gini)
# ---------------------------------------------------------------------------

def _grow_cls_loops(X, y, w, rows, max_depth, min_split, mtry, seed):
    """Loop-based source compiled by numba; do not call uncompiled."""
    n_all, d = X.shape
    m0 = rows.shape[0]
    max_nodes = 2 * m0 + 1

    feature = np.full(max_nodes, -1, np.int32)
    threshold = np.zeros(max_nodes, np.float64)
    left = np.full(max_nodes, -1, np.int32)
    right = np.full(max_nodes, -1, np.int32)
    w0 = np.zeros(max_nodes, np.float64)
    w1 = np.zeros(max_nodes, np.float64)
    counts = np.zeros(max_nodes, np.int32)

    idx = rows.copy()
    perm = np.empty(d, np.int64)
    xbuf = np.empty(m0, np.float64)
    tmp = np.empty(m0, np.int64)

    stack_node = np.empty(max_nodes, np.int64)
    stack_lo = np.empty(max_nodes, np.int64)
    stack_hi = np.empty(max_nodes, np.int64)
    stack_dep = np.empty(max_nodes, np.int64)

    state = np.uint64(seed)
    if state == np.uint64(0):
        state = np.uint64(88172645463325252)

    node_count = 1
    sp = 0
    stack_node[sp] = 0
    stack_lo[sp] = 0
    stack_hi[sp] = m0
    stack_dep[sp] = 0
    sp += 1

    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        lo = stack_lo[sp]
        hi = stack_hi[sp]
        depth = stack_dep[sp]
        m = hi - lo

        wt = 0.0
        yt = 0.0
        for k in range(lo, hi):
            r = idx[k]
            wt += w[r]
            yt += w[r] * y[r]
        w0[node] = wt - yt
        w1[node] = yt
        counts[node] = m

        if depth >= max_depth or m < min_split or yt == 0.0 or yt == wt:
            continue

        p1 = yt / wt
        p0 = (wt - yt) / wt
        parent_gini = 1.0 - p1 * p1 - p0 * p0

        n_feat = mtry
        if n_feat >= d:
            n_feat = d
            for k in range(d):
                perm[k] = k
        else:
            for k in range(d):
                perm[k] = k
            for i in range(n_feat):
                state = _xs64_nb(state)
                j = i + int(state % np.uint64(d - i))
                t = perm[i]
                perm[i] = perm[j]
                perm[j] = t
            # ascending order so ties resolve to the lowest column
            for i in range(1, n_feat):
                v = perm[i]
                j = i - 1
                while j >= 0 and perm[j] > v:
                    perm[j + 1] = perm[j]
                    j -= 1
                perm[j + 1] = v

        best_feat = -1
        best_thr = 0.0
        best_score = np.inf

        for fi in range(n_feat):
            f = perm[fi]
            for k in range(m):
                xbuf[k] = X[idx[lo + k], f]
            order = np.argsort(xbuf[:m], kind="mergesort")
            if xbuf[order[0]] == xbuf[order[m - 1]]:
                continue
            wl = 0.0
            yl = 0.0
            for k in range(m - 1):
                r = idx[lo + order[k]]
                wl += w[r]
                yl += w[r] * y[r]
                xa = xbuf[order[k]]
                xb = xbuf[order[k + 1]]
                if xa == xb:
                    continue
                wr = wt - wl
                yr = yt - yl
                pl1 = yl / wl
                pl0 = (wl - yl) / wl
                gl = 1.0 - pl1 * pl1 - pl0 * pl0
                pr1 = yr / wr
                pr0 = (wr - yr) / wr
                gr = 1.0 - pr1 * pr1 - pr0 * pr0
                score = (wl * gl + wr * gr) / wt
                if score < best_score:
                    best_score = score
                    best_feat = f
                    best_thr = (xa + xb) * 0.5

        if best_feat < 0 or not best_score < parent_gini:
            continue

        # stable partition: <= threshold first, original order preserved
        nl = 0
        for k in range(lo, hi):
            if X[idx[k], best_feat] <= best_thr:
                tmp[nl] = idx[k]
                nl += 1
        nr = nl
        for k in range(lo, hi):
            if not (X[idx[k], best_feat] <= best_thr):
                tmp[nr] = idx[k]
                nr += 1
        for k in range(m):
            idx[lo + k] = tmp[k]

        feature[node] = best_feat
        threshold[node] = best_thr
        lchild = node_count
        rchild = node_count + 1
        node_count += 2
        left[node] = lchild
        right[node] = rchild

        stack_node[sp] = rchild
        stack_lo[sp] = lo + nl
        stack_hi[sp] = hi
        stack_dep[sp] = depth + 1
        sp += 1
        stack_node[sp] = lchild
        stack_lo[sp] = lo
        stack_hi[sp] = lo + nl
        stack_dep[sp] = depth + 1
        sp += 1

    return (feature[:node_count], threshold[:node_count], left[:node_count],
            right[:node_count], w0[:node_count], w1[:node_count],
            counts[:node_count])


def _grow_cls_numpy(X, y, w, rows, max_depth, min_split, mtry, seed):
    """Pure-numpy fallback: python node loop, vectorized column scans."""
    n_all, d = X.shape
    m0 = rows.shape[0]
    max_nodes = 2 * m0 + 1

    feature = np.full(max_nodes, -1, np.int32)
    threshold = np.zeros(max_nodes, np.float64)
    left = np.full(max_nodes, -1, np.int32)
    right = np.full(max_nodes, -1, np.int32)
    w0 = np.zeros(max_nodes, np.float64)
    w1 = np.zeros(max_nodes, np.float64)
    counts = np.zeros(max_nodes, np.int32)

    idx = rows.astype(np.int64).copy()
    state = int(seed) & _MASK64
    if state == 0:
        state = 88172645463325252

    node_count = 1
    stack = [(0, 0, m0, 0)]
    while stack:
        node, lo, hi, depth = stack.pop()
        sub = idx[lo:hi]
        m = hi - lo
        wsub = w[sub]
        wy = wsub * y[sub]
        # cumsum keeps sequential-add semantics, matching the compiled loop
        wt = float(np.cumsum(wsub)[-1])
        yt = float(np.cumsum(wy)[-1])
        w0[node] = wt - yt
        w1[node] = yt
        counts[node] = m

        if depth >= max_depth or m < min_split or yt == 0.0 or yt == wt:
            continue

        p1 = yt / wt
        p0 = (wt - yt) / wt
        parent_gini = 1.0 - p1 * p1 - p0 * p0

        if mtry >= d:
            chosen = np.arange(d)
        else:
            perm = list(range(d))
            for i in range(mtry):
                state = _xs64_py(state)
                j = i + state % (d - i)
                perm[i], perm[j] = perm[j], perm[i]
            chosen = np.sort(np.asarray(perm[:mtry]))

        best_feat = -1
        best_thr = 0.0
        best_score = np.inf

        for f in chosen:
            col = X[sub, f]
            order = np.argsort(col, kind="mergesort")
            xs = col[order]
            if xs[0] == xs[-1]:
                continue
            ws = wsub[order]
            ys = wy[order]
            wl = np.cumsum(ws)[:-1]
            yl = np.cumsum(ys)[:-1]
            bnd = xs[:-1] != xs[1:]
            if not bnd.any():
                continue
            wl = wl[bnd]
            yl = yl[bnd]
            wr = wt - wl
            yr = yt - yl
            pl1 = yl / wl
            pl0 = (wl - yl) / wl
            gl = 1.0 - pl1 * pl1 - pl0 * pl0
            pr1 = yr / wr
            pr0 = (wr - yr) / wr
            gr = 1.0 - pr1 * pr1 - pr0 * pr0
            score = (wl * gl + wr * gr) / wt
            j = int(np.argmin(score))
            if score[j] < best_score:
                best_score = float(score[j])
                best_feat = int(f)
                pos = np.flatnonzero(bnd)[j]
                best_thr = (xs[pos] + xs[pos + 1]) * 0.5

        if best_feat < 0 or not best_score < parent_gini:
            continue

        mask = X[sub, best_feat] <= best_thr
        nl = int(mask.sum())
        idx[lo:hi] = np.concatenate([sub[mask], sub[~mask]])

        feature[node] = best_feat
        threshold[node] = best_thr
        lchild = node_count
        rchild = node_count + 1
        node_count += 2
        left[node] = lchild
        right[node] = rchild
        stack.append((rchild, lo + nl, hi, depth + 1))
        stack.append((lchild, lo, lo + nl, depth + 1))

    return (feature[:node_count], threshold[:node_count], left[:node_count],
            right[:node_count], w0[:node_count], w1[:node_count],
            counts[:node_count])


# ---------------------------------------------------------------------------
# regression tree growth (squared error), used by the boosting stages
# ---------------------------------------------------------------------------

def _grow_reg_loops(X, r, rows, max_depth, min_split):
    n_all, d = X.shape
    m0 = rows.shape[0]
    max_nodes = 2 * m0 + 1

    feature = np.full(max_nodes, -1, np.int32)
    threshold = np.zeros(max_nodes, np.float64)
    left = np.full(max_nodes, -1, np.int32)
    right = np.full(max_nodes, -1, np.int32)
    value = np.zeros(max_nodes, np.float64)
    counts = np.zeros(max_nodes, np.int32)

    idx = rows.copy()
    xbuf = np.empty(m0, np.float64)
    tmp = np.empty(m0, np.int64)

    stack_node = np.empty(max_nodes, np.int64)
    stack_lo = np.empty(max_nodes, np.int64)
    stack_hi = np.empty(max_nodes, np.int64)
    stack_dep = np.empty(max_nodes, np.int64)

    node_count = 1
    sp = 0
    stack_node[sp] = 0
    stack_lo[sp] = 0
    stack_hi[sp] = m0
    stack_dep[sp] = 0
    sp += 1

    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        lo = stack_lo[sp]
        hi = stack_hi[sp]
        depth = stack_dep[sp]
        m = hi - lo

        st = 0.0
        qt = 0.0
        for k in range(lo, hi):
            v = r[idx[k]]
            st += v
            qt += v * v
        mt = float(m)
        value[node] = st / mt
        counts[node] = m
        parent_sse = qt - st * st / mt

        if depth >= max_depth or m < min_split or parent_sse <= 0.0:
            continue

        best_feat = -1
        best_thr = 0.0
        best_score = np.inf

        for f in range(d):
            for k in range(m):
                xbuf[k] = X[idx[lo + k], f]
            order = np.argsort(xbuf[:m], kind="mergesort")
            if xbuf[order[0]] == xbuf[order[m - 1]]:
                continue
            sl = 0.0
            ql = 0.0
            for k in range(m - 1):
                v = r[idx[lo + order[k]]]
                sl += v
                ql += v * v
                xa = xbuf[order[k]]
                xb = xbuf[order[k + 1]]
                if xa == xb:
                    continue
                ml = float(k + 1)
                mr = mt - ml
                sr = st - sl
                qr = qt - ql
                score = (ql - sl * sl / ml) + (qr - sr * sr / mr)
                if score < best_score:
                    best_score = score
                    best_feat = f
                    best_thr = (xa + xb) * 0.5

        if best_feat < 0 or not best_score < parent_sse:
            continue

        nl = 0
        for k in range(lo, hi):
            if X[idx[k], best_feat] <= best_thr:
                tmp[nl] = idx[k]
                nl += 1
        nr = nl
        for k in range(lo, hi):
            if not (X[idx[k], best_feat] <= best_thr):
                tmp[nr] = idx[k]
                nr += 1
        for k in range(m):
            idx[lo + k] = tmp[k]

        feature[node] = best_feat
        threshold[node] = best_thr
        lchild = node_count
        rchild = node_count + 1
        node_count += 2
        left[node] = lchild
        right[node] = rchild

        stack_node[sp] = rchild
        stack_lo[sp] = lo + nl
        stack_hi[sp] = hi
        stack_dep[sp] = depth + 1
        sp += 1
        stack_node[sp] = lchild
        stack_lo[sp] = lo
        stack_hi[sp] = lo + nl
        stack_dep[sp] = depth + 1
        sp += 1

    return (feature[:node_count], threshold[:node_count], left[:node_count],
            right[:node_count], value[:node_count], counts[:node_count])


def _grow_reg_numpy(X, r, rows, max_depth, min_split):
    n_all, d = X.shape
    m0 = rows.shape[0]
    max_nodes = 2 * m0 + 1

    feature = np.full(max_nodes, -1, np.int32)
    threshold = np.zeros(max_nodes, np.float64)
    left = np.full(max_nodes, -1, np.int32)
    right = np.full(max_nodes, -1, np.int32)
    value = np.zeros(max_nodes, np.float64)
    counts = np.zeros(max_nodes, np.int32)

    idx = rows.astype(np.int64).copy()
    node_count = 1
    stack = [(0, 0, m0, 0)]
    while stack:
        node, lo, hi, depth = stack.pop()
        sub = idx[lo:hi]
        m = hi - lo
        rv = r[sub]
        st = float(np.cumsum(rv)[-1])
        qt = float(np.cumsum(rv * rv)[-1])
        mt = float(m)
        value[node] = st / mt
        counts[node] = m
        parent_sse = qt - st * st / mt

        if depth >= max_depth or m < min_split or parent_sse <= 0.0:
            continue

        best_feat = -1
        best_thr = 0.0
        best_score = np.inf

        for f in range(X.shape[1]):
            col = X[sub, f]
            order = np.argsort(col, kind="mergesort")
            xs = col[order]
            if xs[0] == xs[-1]:
                continue
            rs = rv[order]
            sl = np.cumsum(rs)[:-1]
            ql = np.cumsum(rs * rs)[:-1]
            bnd = xs[:-1] != xs[1:]
            if not bnd.any():
                continue
            sl = sl[bnd]
            ql = ql[bnd]
            ml = (np.flatnonzero(bnd) + 1).astype(np.float64)
            mr = mt - ml
            sr = st - sl
            qr = qt - ql
            score = (ql - sl * sl / ml) + (qr - sr * sr / mr)
            j = int(np.argmin(score))
            if score[j] < best_score:
                best_score = float(score[j])
                best_feat = int(f)
                pos = np.flatnonzero(bnd)[j]
                best_thr = (xs[pos] + xs[pos + 1]) * 0.5

        if best_feat < 0 or not best_score < parent_sse:
            continue

        mask = X[sub, best_feat] <= best_thr
        nl = int(mask.sum())
        idx[lo:hi] = np.concatenate([sub[mask], sub[~mask]])

        feature[node] = best_feat
        threshold[node] = best_thr
        lchild = node_count
        rchild = node_count + 1
        node_count += 2
        left[node] = lchild
        right[node] = rchild
        stack.append((rchild, lo + nl, hi, depth + 1))
        stack.append((lchild, lo, lo + nl, depth + 1))

    return (feature[:node_count], threshold[:node_count], left[:node_count],
            right[:node_count], value[:node_count], counts[:node_count])


# ---------------------------------------------------------------------------
# tree application
# ---------------------------------------------------------------------------

def _apply_loops(feature, threshold, left, right, X):
    n = X.shape[0]
    out = np.empty(n, np.int32)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


def _apply_numpy(feature, threshold, left, right, X):
    n = X.shape[0]
    cur = np.zeros(n, np.int32)
    active = feature[cur] >= 0
    while active.any():
        rows = np.flatnonzero(active)
        nodes = cur[rows]
        f = feature[nodes]
        go_left = X[rows, f] <= threshold[nodes]
        cur[rows] = np.where(go_left, left[nodes], right[nodes])
        active[rows] = feature[cur[rows]] >= 0
    return cur


# ---------------------------------------------------------------------------
# graph kernels: Brandes betweenness counts and BFS distance sums
# ---------------------------------------------------------------------------

def _betweenness_loops(indptr, indices, rindptr, rindices, n):
    bc = np.zeros(n, np.float64)
    dist = np.empty(n, np.int64)
    sigma = np.empty(n, np.float64)
    delta = np.empty(n, np.float64)
    order = np.empty(n, np.int64)

    for s in range(n):
        for i in range(n):
            dist[i] = -1
            sigma[i] = 0.0
            delta[i] = 0.0
        dist[s] = 0
        sigma[s] = 1.0
        head = 0
        tail = 0
        order[tail] = s
        tail += 1
        while head < tail:
            v = order[head]
            head += 1
            for e in range(indptr[v], indptr[v + 1]):
                u = indices[e]
                if dist[u] < 0:
                    dist[u] = dist[v] + 1
                    order[tail] = u
                    tail += 1
                if dist[u] == dist[v] + 1:
                    sigma[u] += sigma[v]
        for qi in range(tail - 1, -1, -1):
            wnode = order[qi]
            coeff = (1.0 + delta[wnode]) / sigma[wnode]
            for e in range(rindptr[wnode], rindptr[wnode + 1]):
                v = rindices[e]
                if dist[v] == dist[wnode] - 1:
                    delta[v] += sigma[v] * coeff
            if wnode != s:
                bc[wnode] += delta[wnode]
    return bc


def _distance_sums_loops(indptr, indices, n):
    total = 0.0
    pairs = 0
    dist = np.empty(n, np.int64)
    order = np.empty(n, np.int64)
    for s in range(n):
        for i in range(n):
            dist[i] = -1
        dist[s] = 0
        head = 0
        tail = 0
        order[tail] = s
        tail += 1
        while head < tail:
            v = order[head]
            head += 1
            for e in range(indptr[v], indptr[v + 1]):
                u = indices[e]
                if dist[u] < 0:
                    dist[u] = dist[v] + 1
                    order[tail] = u
                    tail += 1
        for i in range(n):
            if i != s and dist[i] > 0:
                total += float(dist[i])
                pairs += 1
    return total, pairs


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

if HAS_NUMBA:
    grow_cls_nb = njit(cache=True)(_grow_cls_loops)
    grow_reg_nb = njit(cache=True)(_grow_reg_loops)
    apply_nb = njit(cache=True)(_apply_loops)
    betweenness_nb = njit(cache=True)(_betweenness_loops)
    distance_sums_nb = njit(cache=True)(_distance_sums_loops)
else:  # pragma: no cover - depends on environment
    grow_cls_nb = None
    grow_reg_nb = None
    apply_nb = None
    betweenness_nb = None
    distance_sums_nb = None

grow_cls_np = _grow_cls_numpy
grow_reg_np = _grow_reg_numpy
apply_np = _apply_numpy
# graph fallbacks reuse the loop source uncompiled: windows yield small graphs
betweenness_np = _betweenness_loops
distance_sums_np = _distance_sums_loops

if USE_NUMBA:
    grow_cls = grow_cls_nb
    grow_reg = grow_reg_nb
    tree_apply = apply_nb
    betweenness_counts = betweenness_nb
    distance_sums = distance_sums_nb
else:
    grow_cls = grow_cls_np
    grow_reg = grow_reg_np
    tree_apply = apply_np
    betweenness_counts = betweenness_np
    distance_sums = distance_sums_np
