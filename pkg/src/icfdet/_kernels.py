"""Numba inner loops: exhaustive stump search and SAD translation search.

Everything here is deterministic: parallel loops only write per-index output
slots, and all floating-point accumulation happens in a fixed sequential
order within each index. Results are independent of thread count.

Weighted class masses are carried as (s, d) = (sum of w, sum of w*y) prefix
sums; the positive/negative masses are recovered as p = (s+d)/2 and
n = (s-d)/2. The pure-Python oracles in the test suite mirror this
convention so exact float comparisons are meaningful.

Stump search convention: candidate thresholds are the midpoints of
consecutive distinct sorted values; ties keep the lowest threshold. The
-inf "no split" sentinel (everything routed right, both leaves majority)
is used only when it is strictly better than every midpoint split, or when
no midpoint exists.
"""

import numpy as np
from numba import njit, prange


@njit(cache=True, parallel=True)
def stump_search_all(xt, order, w_signed, w_abs):
    """Best threshold per feature over all samples.

    xt: (F, N) feature matrix, order: (F, N) int32 argsort of each row,
    w_signed = w*y, w_abs = w. Returns per-feature arrays
    (error, threshold, left_label, right_label).
    """
    n_feat, n = xt.shape
    best_err = np.empty(n_feat)
    best_thr = np.empty(n_feat)
    best_ll = np.empty(n_feat, dtype=np.int8)
    best_rl = np.empty(n_feat, dtype=np.int8)
    for f in prange(n_feat):
        stot = 0.0
        dtot = 0.0
        for i in range(n):
            stot += w_abs[i]
            dtot += w_signed[i]
        ptot = (stot + dtot) / 2.0
        ntot = (stot - dtot) / 2.0
        b_err = np.inf
        b_thr = -np.inf
        b_ll = np.int8(1)
        b_rl = np.int8(1)
        s = 0.0
        d = 0.0
        prev = xt[f, order[f, 0]]
        for j in range(n):
            i = order[f, j]
            v = xt[f, i]
            if v > prev:
                p = (s + d) / 2.0
                q = (s - d) / 2.0
                e = min(p, q) + min(ptot - p, ntot - q)
                if e < b_err:
                    b_err = e
                    b_thr = (prev + v) / 2.0
                    b_ll = np.int8(1) if p >= q else np.int8(-1)
                    b_rl = np.int8(1) if ptot - p >= ntot - q else np.int8(-1)
                prev = v
            s += w_abs[i]
            d += w_signed[i]
        sent_err = min(ptot, ntot)
        if sent_err < b_err:
            maj = np.int8(1) if ptot >= ntot else np.int8(-1)
            b_err = sent_err
            b_thr = -np.inf
            b_ll = maj
            b_rl = maj
        best_err[f] = b_err
        best_thr[f] = b_thr
        best_ll[f] = b_ll
        best_rl[f] = b_rl
    return best_err, best_thr, best_ll, best_rl


@njit(cache=True, parallel=True)
def stump_search_sides(xt, order, w_signed, w_abs, side):
    """Best threshold per feature for both root partitions in one pass.

    side: (N,) int8 in {0, 1} assigning each sample to the left/right
    child. Returns (error, threshold, left_label, right_label) arrays of
    shape (F, 2); column c is the best stump over the samples of child c.
    An empty child reports error 0, threshold -inf, labels +1.
    """
    n_feat, n = xt.shape
    best_err = np.empty((n_feat, 2))
    best_thr = np.empty((n_feat, 2))
    best_ll = np.empty((n_feat, 2), dtype=np.int8)
    best_rl = np.empty((n_feat, 2), dtype=np.int8)
    for f in prange(n_feat):
        st = np.zeros(2)
        dt = np.zeros(2)
        for i in range(n):
            c = side[i]
            st[c] += w_abs[i]
            dt[c] += w_signed[i]
        pt = np.empty(2)
        nt = np.empty(2)
        b_err = np.empty(2)
        b_thr = np.empty(2)
        b_ll = np.empty(2, dtype=np.int8)
        b_rl = np.empty(2, dtype=np.int8)
        for c in range(2):
            pt[c] = (st[c] + dt[c]) / 2.0
            nt[c] = (st[c] - dt[c]) / 2.0
            b_err[c] = np.inf
            b_thr[c] = -np.inf
            b_ll[c] = np.int8(1)
            b_rl[c] = np.int8(1)
        s = np.zeros(2)
        d = np.zeros(2)
        prev = np.zeros(2)
        seen = np.zeros(2, dtype=np.int8)
        for j in range(n):
            i = order[f, j]
            c = side[i]
            v = xt[f, i]
            if seen[c] == 1 and v > prev[c]:
                p = (s[c] + d[c]) / 2.0
                q = (s[c] - d[c]) / 2.0
                e = min(p, q) + min(pt[c] - p, nt[c] - q)
                if e < b_err[c]:
                    b_err[c] = e
                    b_thr[c] = (prev[c] + v) / 2.0
                    b_ll[c] = np.int8(1) if p >= q else np.int8(-1)
                    b_rl[c] = np.int8(1) if pt[c] - p >= nt[c] - q else np.int8(-1)
            s[c] += w_abs[i]
            d[c] += w_signed[i]
            prev[c] = v
            seen[c] = 1
        for c in range(2):
            sent_err = min(pt[c], nt[c])
            if sent_err < b_err[c]:
                maj = np.int8(1) if pt[c] >= nt[c] else np.int8(-1)
                b_err[c] = sent_err
                b_thr[c] = -np.inf
                b_ll[c] = maj
                b_rl[c] = maj
            best_err[f, c] = b_err[c]
            best_thr[f, c] = b_thr[c]
            best_ll[f, c] = b_ll[c]
            best_rl[f, c] = b_rl[c]
    return best_err, best_thr, best_ll, best_rl


@njit(cache=True, parallel=True)
def sad_costs(cur, past, radius):
    """Sum of absolute differences for every integer shift in [-r, r]^2.

    Entry (dy + r, dx + r) is the SAD between `cur` and `past` translated
    by (dy, dx), summed over the overlap region only (out-of-bounds pixels
    contribute nothing).
    """
    size = 2 * radius + 1
    costs = np.empty((size, size))
    h, w = cur.shape
    for k in prange(size * size):
        dy = k // size - radius
        dx = k % size - radius
        y0 = max(0, dy)
        y1 = h + min(0, dy)
        x0 = max(0, dx)
        x1 = w + min(0, dx)
        acc = 0.0
        for y in range(y0, y1):
            for x in range(x0, x1):
                acc += abs(cur[y, x] - past[y - dy, x - dx])
        costs[dy + radius, dx + radius] = acc
    return costs
