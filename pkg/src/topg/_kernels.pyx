# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: greedy edge grouping, windowed contour scoring,
and greedy box suppression. Contracts mirror _kernels_py exactly."""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, pow

cnp.import_array()

BACKEND_NAME = "compiled"

cdef double PI = 3.141592653589793
cdef double HALF_PI = 1.5707963267948966
cdef double CHAIN_FLOOR = 0.05

# fixed traversal order: raster over the 8-neighborhood
cdef int[8] NBR_DX = [-1, 0, 1, -1, 1, -1, 0, 1]
cdef int[8] NBR_DY = [-1, -1, -1, 0, 0, 1, 1, 1]


cdef inline double orient_diff(double a, double b) noexcept nogil:
    cdef double d = fabs(a - b)
    return d if d <= HALF_PI else PI - d


def label_edge_groups(const double[:, ::1] mag, const double[:, ::1] ori,
                      double mag_threshold, double curve_threshold):
    """Assign group ids to edge pixels by greedy 8-connected traversal."""
    cdef Py_ssize_t h = mag.shape[0], w = mag.shape[1]
    labels_arr = np.zeros((h, w), dtype=np.int32)
    cum_arr = np.zeros((h, w), dtype=np.float64)
    stack_arr = np.zeros(h * w, dtype=np.int64)
    cdef int[:, ::1] labels = labels_arr
    cdef double[:, ::1] cum = cum_arr
    cdef long long[::1] stack = stack_arr
    cdef Py_ssize_t sx, sy, cx, cy, nx, ny, top
    cdef int k, next_id = 0
    cdef double budget, base, acc
    with nogil:
        for sy in range(h):
            for sx in range(w):
                if mag[sy, sx] <= mag_threshold or labels[sy, sx] != 0:
                    continue
                next_id += 1
                labels[sy, sx] = next_id
                cum[sy, sx] = 0.0
                stack[0] = sy * w + sx
                top = 1
                while top > 0:
                    top -= 1
                    cy = stack[top] // w
                    cx = stack[top] % w
                    budget = cum[cy, cx]
                    base = ori[cy, cx]
                    for k in range(8):
                        nx = cx + NBR_DX[k]
                        ny = cy + NBR_DY[k]
                        if nx < 0 or ny < 0 or nx >= w or ny >= h:
                            continue
                        if mag[ny, nx] <= mag_threshold or labels[ny, nx] != 0:
                            continue
                        acc = budget + orient_diff(ori[ny, nx], base)
                        if acc <= curve_threshold:
                            labels[ny, nx] = next_id
                            cum[ny, nx] = acc
                            stack[top] = ny * w + nx
                            top += 1
    return labels_arr, next_id


cdef inline double rect_sum(const double[:, ::1] table, Py_ssize_t x,
                            Py_ssize_t y, Py_ssize_t w,
                            Py_ssize_t h) noexcept nogil:
    return table[y + h, x + w] - table[y, x + w] - table[y + h, x] \
        + table[y, x]


def build_reach(const long long[::1] indptr, const int[::1] indices,
                const double[::1] weights, Py_ssize_t n_groups):
    """Per-group floored max-product reachability as CSR rows.

    Row u lists every other group v reachable from u through affinity
    chains whose prefix products stay at or above CHAIN_FLOOR, with the
    best product (lazy-deletion max-heap Dijkstra per source).
    """
    cdef Py_ssize_t nnz = indices.shape[0]
    best_arr = np.zeros(n_groups, dtype=np.float64)
    stamp_arr = np.zeros(n_groups, dtype=np.int64)
    settled_arr = np.zeros(n_groups, dtype=np.int64)
    nodes_arr = np.zeros(n_groups, dtype=np.int64)
    heap_val_arr = np.zeros(nnz + n_groups + 8, dtype=np.float64)
    heap_node_arr = np.zeros(nnz + n_groups + 8, dtype=np.int64)
    cdef double[::1] best = best_arr
    cdef long long[::1] stamp = stamp_arr
    cdef long long[::1] settled = settled_arr
    cdef long long[::1] nodes = nodes_arr
    cdef double[::1] heap_val = heap_val_arr
    cdef long long[::1] heap_node = heap_node_arr
    rows = []
    cdef Py_ssize_t u, nn, hn, pos, child, kk, j, pick
    cdef long long version = 0
    cdef double cand, pick_val
    cdef long long g
    for u in range(n_groups):
        version += 1
        nn = 0
        hn = 0
        stamp[u] = version
        best[u] = 1.0
        settled[u] = 0
        nodes[nn] = u
        nn += 1
        heap_val[0] = 1.0
        heap_node[0] = u
        hn = 1
        while hn > 0:
            pick = heap_node[0]
            pick_val = heap_val[0]
            hn -= 1
            heap_val[0] = heap_val[hn]
            heap_node[0] = heap_node[hn]
            pos = 0
            while True:
                child = 2 * pos + 1
                if child >= hn:
                    break
                if child + 1 < hn and heap_val[child + 1] > heap_val[child]:
                    child += 1
                if heap_val[child] <= heap_val[pos]:
                    break
                heap_val[pos], heap_val[child] = heap_val[child], heap_val[pos]
                heap_node[pos], heap_node[child] = heap_node[child], \
                    heap_node[pos]
                pos = child
            if settled[pick] or pick_val < best[pick]:
                continue  # stale entry
            settled[pick] = 1
            for kk in range(indptr[pick], indptr[pick + 1]):
                j = indices[kk]
                cand = pick_val * weights[kk]
                if cand < CHAIN_FLOOR:
                    continue
                if stamp[j] == version:
                    if cand <= best[j]:
                        continue
                    best[j] = cand
                else:
                    stamp[j] = version
                    best[j] = cand
                    settled[j] = 0
                    nodes[nn] = j
                    nn += 1
                heap_val[hn] = cand
                heap_node[hn] = j
                hn += 1
                pos = hn - 1
                while pos > 0 and heap_val[(pos - 1) // 2] < heap_val[pos]:
                    heap_val[pos], heap_val[(pos - 1) // 2] = \
                        heap_val[(pos - 1) // 2], heap_val[pos]
                    heap_node[pos], heap_node[(pos - 1) // 2] = \
                        heap_node[(pos - 1) // 2], heap_node[pos]
                    pos = (pos - 1) // 2
        row = []
        for kk in range(nn):
            g = nodes[kk]
            if g != u:
                row.append((g, best[g]))
        rows.append(row)
    total = sum(len(r) for r in rows)
    rptr_arr = np.zeros(n_groups + 1, dtype=np.int64)
    rind_arr = np.zeros(total, dtype=np.int32)
    rval_arr = np.zeros(total, dtype=np.float64)
    pos = 0
    for u in range(n_groups):
        for g, v in rows[u]:
            rind_arr[pos] = g
            rval_arr[pos] = v
            pos += 1
        rptr_arr[u + 1] = pos
    return rptr_arr, rind_arr, rval_arr


cdef double score_one(Py_ssize_t bx, Py_ssize_t by, Py_ssize_t bw,
                      Py_ssize_t bh, const int[:, ::1] labels,
                      const double[::1] gmag, const int[:, ::1] gbox,
                      const long long[::1] mstart, const int[::1] mx,
                      const int[::1] my, const double[::1] mmag,
                      const long long[::1] rptr, const int[::1] rind,
                      const double[::1] rval,
                      const double[:, ::1] integral, double center_frac,
                      double perim_exp, double[::1] best,
                      long long[::1] stamp, long long[::1] nodes,
                      long long version) noexcept:
    """One window score; scratch arrays are stamped with version."""
    cdef Py_ssize_t x1, y1, xx, yy, g, nn, ns, kk, pos, iw, ih, side, j
    cdef int lab
    cdef double acc, penalty
    acc = rect_sum(integral, bx, by, bw, bh)
    if acc <= 0.0:
        return 0.0
    x1 = bx + bw - 1
    y1 = by + bh - 1
    nn = 0
    # groups on the boundary ring that stick outside straddle the box
    for side in range(2):
        yy = by if side == 0 else y1
        if side == 1 and y1 == by:
            break
        for xx in range(bx, bx + bw):
            lab = labels[yy, xx]
            if lab > 0:
                g = lab - 1
                if stamp[g] != version:
                    stamp[g] = version
                    if gbox[g, 0] < bx or gbox[g, 1] < by \
                            or gbox[g, 2] > x1 or gbox[g, 3] > y1:
                        best[g] = 1.0
                        nodes[nn] = g
                        nn += 1
                    else:
                        stamp[g] = 0  # inside group: leave untouched
    for side in range(2):
        xx = bx if side == 0 else x1
        if side == 1 and x1 == bx:
            break
        for yy in range(by + 1, y1):
            lab = labels[yy, xx]
            if lab > 0:
                g = lab - 1
                if stamp[g] != version:
                    stamp[g] = version
                    if gbox[g, 0] < bx or gbox[g, 1] < by \
                            or gbox[g, 2] > x1 or gbox[g, 3] > y1:
                        best[g] = 1.0
                        nodes[nn] = g
                        nn += 1
                    else:
                        stamp[g] = 0
    if nn > 0:
        ns = nn
        # straddling groups score zero: drop their in-window pixels
        for kk in range(ns):
            g = nodes[kk]
            for pos in range(mstart[g], mstart[g + 1]):
                if bx <= mx[pos] <= x1 and by <= my[pos] <= y1:
                    acc -= mmag[pos]
        # best chain product from any straddler, via reach rows
        for kk in range(ns):
            g = nodes[kk]
            for pos in range(rptr[g], rptr[g + 1]):
                j = rind[pos]
                if stamp[j] == version:
                    if rval[pos] > best[j]:
                        best[j] = rval[pos]
                else:
                    stamp[j] = version
                    best[j] = rval[pos]
                    nodes[nn] = j
                    nn += 1
        # chained discount of wholly-inside groups
        for kk in range(nn):
            g = nodes[kk]
            if gbox[g, 0] >= bx and gbox[g, 1] >= by \
                    and gbox[g, 2] <= x1 and gbox[g, 3] <= y1:
                acc -= best[g] * gmag[g]
    iw = <Py_ssize_t>(bw * center_frac)
    ih = <Py_ssize_t>(bh * center_frac)
    if iw >= 1 and ih >= 1:
        penalty = rect_sum(integral, bx + (bw - iw) // 2,
                           by + (bh - ih) // 2, iw, ih)
        acc -= penalty
    if acc > 0.0:
        return acc / (2.0 * pow(bw + bh, perim_exp))
    return 0.0


def score_boxes(const int[:, ::1] boxes, const int[:, ::1] labels,
                const double[::1] gmag, const int[:, ::1] gbox,
                const long long[::1] mstart, const int[::1] mx,
                const int[::1] my, const double[::1] mmag,
                const long long[::1] rptr, const int[::1] rind,
                const double[::1] rval, const double[:, ::1] integral,
                double center_frac, double perim_exp):
    """Contour score for each (x, y, w, h) window, all inside the grid.

    See _kernels_py.score_boxes for the contract; arithmetic matches the
    fallback to within summation-order rounding.
    """
    cdef Py_ssize_t n = boxes.shape[0]
    cdef Py_ssize_t ngroups = gmag.shape[0]
    rho_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] rho = rho_arr
    # per-box scratch with version stamps so nothing is re-cleared
    best_arr = np.zeros(ngroups, dtype=np.float64)
    stamp_arr = np.zeros(ngroups, dtype=np.int64)
    nodes_arr = np.zeros(ngroups, dtype=np.int64)
    cdef double[::1] best = best_arr
    cdef long long[::1] stamp = stamp_arr
    cdef long long[::1] nodes = nodes_arr
    cdef Py_ssize_t i
    for i in range(n):
        rho[i] = score_one(boxes[i, 0], boxes[i, 1], boxes[i, 2],
                           boxes[i, 3], labels, gmag, gbox, mstart, mx, my,
                           mmag, rptr, rind, rval, integral, center_frac,
                           perim_exp, best, stamp, nodes, i + 1)
    return rho_arr


# neighbor moves: +/- one step in x, y, w, h (same order as the fallback)
cdef int[8] MOVE_DX = [-1, 1, 0, 0, 0, 0, 0, 0]
cdef int[8] MOVE_DY = [0, 0, -1, 1, 0, 0, 0, 0]
cdef int[8] MOVE_DW = [0, 0, 0, 0, -1, 1, 0, 0]
cdef int[8] MOVE_DH = [0, 0, 0, 0, 0, 0, -1, 1]


def refine_boxes(const int[:, ::1] boxes_in, const int[:, ::1] steps,
                 const double[::1] rho_in, const int[:, ::1] labels,
                 const double[::1] gmag, const int[:, ::1] gbox,
                 const long long[::1] mstart, const int[::1] mx,
                 const int[::1] my, const double[::1] mmag,
                 const long long[::1] rptr, const int[::1] rind,
                 const double[::1] rval, const double[:, ::1] integral,
                 double center_frac, double perim_exp,
                 Py_ssize_t span_w, Py_ssize_t span_h, Py_ssize_t rounds):
    """Greedy per-box hill climb over the score surface.

    Each box independently evaluates its 8 one-step neighbors, moves to
    the best strictly-improving one (first-listed wins ties), halves its
    step on failure, and stops once it is a local maximum at 1-pixel
    steps or the round cap is hit. A shared memo keyed by box keeps
    repeat evaluations O(1); results equal the fallback's batched climb.
    """
    cdef Py_ssize_t n = boxes_in.shape[0]
    cdef Py_ssize_t ngroups = gmag.shape[0]
    boxes_arr = np.array(boxes_in, dtype=np.int32, copy=True)
    rho_arr = np.array(rho_in, dtype=np.float64, copy=True)
    cdef int[:, ::1] boxes = boxes_arr
    cdef double[::1] rho = rho_arr
    best_arr = np.zeros(ngroups, dtype=np.float64)
    stamp_arr = np.zeros(ngroups, dtype=np.int64)
    nodes_arr = np.zeros(ngroups, dtype=np.int64)
    cdef double[::1] best = best_arr
    cdef long long[::1] stamp = stamp_arr
    cdef long long[::1] nodes = nodes_arr
    # open-addressing memo: packed (x, y, w, h) -> score
    cdef Py_ssize_t cap_bits = 18
    cdef Py_ssize_t cap = 1 << cap_bits
    cdef Py_ssize_t mask = cap - 1
    while cap < 4 * n and cap_bits < 24:
        cap_bits += 1
        cap = 1 << cap_bits
        mask = cap - 1
    memo_key_arr = np.zeros(cap, dtype=np.int64)
    memo_val_arr = np.zeros(cap, dtype=np.float64)
    cdef long long[::1] memo_key = memo_key_arr
    cdef double[::1] memo_val = memo_val_arr
    cdef Py_ssize_t used = 0, limit = (cap * 7) // 10
    cdef long long version = 0
    cdef Py_ssize_t i, r, k, slot
    cdef Py_ssize_t cx, cy, cw, ch, sx, sy, nx, ny, nw, nh, bk
    cdef Py_ssize_t ix0, iy0, ix1, iy1
    cdef long long key
    cdef double cur, val, bv
    cdef bint found

    # seed the memo with the already-scored input boxes
    for i in range(n):
        if used >= limit:
            break
        key = ((<long long>boxes[i, 0]) << 48) \
            | ((<long long>boxes[i, 1]) << 32) \
            | ((<long long>boxes[i, 2]) << 16) | (<long long>boxes[i, 3])
        slot = <Py_ssize_t>((<unsigned long long>key
                             * <unsigned long long>0x9E3779B97F4A7C15u)
                            >> (64 - cap_bits)) & mask
        while memo_key[slot] != 0 and memo_key[slot] != key:
            slot = (slot + 1) & mask
        if memo_key[slot] == 0:
            memo_key[slot] = key
            memo_val[slot] = rho[i]
            used += 1

    for i in range(n):
        cx = boxes[i, 0]
        cy = boxes[i, 1]
        cw = boxes[i, 2]
        ch = boxes[i, 3]
        sx = steps[i, 0]
        sy = steps[i, 1]
        # no grouped mass anywhere a neighbor could reach: local max now
        ix0 = cx - sx if cx - sx > 0 else 0
        iy0 = cy - sy if cy - sy > 0 else 0
        ix1 = cx + cw + sx if cx + cw + sx < span_w else span_w
        iy1 = cy + ch + sy if cy + ch + sy < span_h else span_h
        if ix1 <= ix0 or iy1 <= iy0 or \
                integral[iy1, ix1] - integral[iy0, ix1] \
                - integral[iy1, ix0] + integral[iy0, ix0] <= 0.0:
            continue
        cur = rho[i]
        for r in range(rounds):
            bk = -1
            bv = cur
            for k in range(8):
                nx = cx + MOVE_DX[k] * sx
                ny = cy + MOVE_DY[k] * sy
                nw = cw + MOVE_DW[k] * sx
                nh = ch + MOVE_DH[k] * sy
                if nx < 0 or ny < 0 or nw < 1 or nh < 1 \
                        or nx + nw > span_w or ny + nh > span_h:
                    continue
                key = ((<long long>nx) << 48) | ((<long long>ny) << 32) \
                    | ((<long long>nw) << 16) | (<long long>nh)
                slot = <Py_ssize_t>((<unsigned long long>key
                                     * <unsigned long long>0x9E3779B97F4A7C15u)
                                    >> (64 - cap_bits)) & mask
                found = False
                while memo_key[slot] != 0:
                    if memo_key[slot] == key:
                        val = memo_val[slot]
                        found = True
                        break
                    slot = (slot + 1) & mask
                if not found:
                    version += 1
                    val = score_one(nx, ny, nw, nh, labels, gmag, gbox,
                                    mstart, mx, my, mmag, rptr, rind, rval,
                                    integral, center_frac, perim_exp,
                                    best, stamp, nodes, version)
                    if used < limit:
                        memo_key[slot] = key
                        memo_val[slot] = val
                        used += 1
                if val > bv:
                    bv = val
                    bk = k
            if bk >= 0:
                cx += MOVE_DX[bk] * sx
                cy += MOVE_DY[bk] * sy
                cw += MOVE_DW[bk] * sx
                ch += MOVE_DH[bk] * sy
                cur = bv
            else:
                if sx <= 1 and sy <= 1:
                    break
                sx = sx // 2 if sx // 2 > 0 else 1
                sy = sy // 2 if sy // 2 > 0 else 1
        boxes[i, 0] = cx
        boxes[i, 1] = cy
        boxes[i, 2] = cw
        boxes[i, 3] = ch
        rho[i] = cur
    return boxes_arr, rho_arr


def nms_keep(boxes, double iou_threshold, long long limit=-1):
    """Greedy suppression over boxes already sorted by preference."""
    boxes_arr = np.ascontiguousarray(boxes, dtype=np.int64)
    cdef const long long[:, ::1] b = boxes_arr
    cdef Py_ssize_t n = b.shape[0]
    kept_arr = np.zeros(n, dtype=np.int64)
    cdef long long[::1] kept = kept_arr
    cdef Py_ssize_t nk = 0, i, kj
    cdef long long x, y, w, h, kx, ky, kw, kh, iw, ih, inter
    cdef bint ok
    for i in range(n):
        if limit >= 0 and nk >= limit:
            break
        x = b[i, 0]
        y = b[i, 1]
        w = b[i, 2]
        h = b[i, 3]
        ok = True
        for kj in range(nk):
            kx = b[kept[kj], 0]
            ky = b[kept[kj], 1]
            kw = b[kept[kj], 2]
            kh = b[kept[kj], 3]
            iw = min(x + w, kx + kw) - max(x, kx)
            if iw <= 0:
                continue
            ih = min(y + h, ky + kh) - max(y, ky)
            if ih <= 0:
                continue
            inter = iw * ih
            if (<double>inter) / (<double>(w * h + kw * kh - inter)) \
                    >= iou_threshold:
                ok = False
                break
        if ok:
            kept[nk] = i
            nk += 1
    return kept_arr[:nk].copy()
