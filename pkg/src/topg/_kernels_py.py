"""Pure-Python fallback for the hot kernels.

Same contracts as the compiled extension in _kernels.pyx: greedy edge
grouping, windowed contour scoring, and greedy box suppression. The
compiled module is preferred at import time; this one keeps the package
functional (and the test oracles honest) without a C toolchain.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND_NAME = "python"

_PI = math.pi
_HALF_PI = math.pi / 2.0

CHAIN_FLOOR = 0.05  # chain products below the table's sparsity floor drop

# fixed traversal order: raster over the 8-neighborhood
_NEIGHBORS = ((-1, -1), (0, -1), (1, -1), (-1, 0),
              (1, 0), (-1, 1), (0, 1), (1, 1))


def _orient_diff(a: float, b: float) -> float:
    d = abs(a - b)
    return d if d <= _HALF_PI else _PI - d


def label_edge_groups(mag, ori, mag_threshold, curve_threshold):
    """Assign group ids to edge pixels by greedy 8-connected traversal.

    A pixel joins the current group while the orientation change
    accumulated along the traversal path stays within curve_threshold.
    Returns (labels int32 grid with 0 = ungrouped, group count).
    """
    mag = np.asarray(mag, dtype=np.float64)
    ori = np.asarray(ori, dtype=np.float64)
    h, w = mag.shape
    labels = np.zeros((h, w), dtype=np.int32)
    cum = np.zeros((h, w), dtype=np.float64)
    edge = mag > mag_threshold
    next_id = 0
    for sy in range(h):
        for sx in range(w):
            if not edge[sy, sx] or labels[sy, sx] != 0:
                continue
            next_id += 1
            labels[sy, sx] = next_id
            cum[sy, sx] = 0.0
            stack = [(sx, sy)]
            while stack:
                cx, cy = stack.pop()
                budget = cum[cy, cx]
                base = ori[cy, cx]
                for dx, dy in _NEIGHBORS:
                    nx, ny = cx + dx, cy + dy
                    if nx < 0 or ny < 0 or nx >= w or ny >= h:
                        continue
                    if not edge[ny, nx] or labels[ny, nx] != 0:
                        continue
                    acc = budget + _orient_diff(ori[ny, nx], base)
                    if acc <= curve_threshold:
                        labels[ny, nx] = next_id
                        cum[ny, nx] = acc
                        stack.append((nx, ny))
    return labels, next_id


def _rect_sum(table, x, y, w, h):
    return table[y + h, x + w] - table[y, x + w] - table[y + h, x] + table[y, x]


def _single_source_chain(src, indptr, indices, weights):
    """Floored max-product Dijkstra from one node (best-first settle,
    ties by smallest id); products under CHAIN_FLOOR count as broken."""
    best = {int(src): 1.0}
    settled = set()
    while True:
        pick, pick_val = -1, 0.0
        for g, v in best.items():
            if g in settled:
                continue
            if v > pick_val or (v == pick_val and (pick == -1 or g < pick)):
                pick, pick_val = g, v
        if pick < 0:
            return best
        settled.add(pick)
        for k in range(indptr[pick], indptr[pick + 1]):
            j = int(indices[k])
            cand = pick_val * weights[k]
            if cand >= CHAIN_FLOOR and cand > best.get(j, 0.0):
                best[j] = cand


def build_reach(indptr, indices, weights, n_groups):
    """Per-group floored max-product reachability as CSR rows.

    Row u lists every other group v reachable from u through affinity
    chains whose prefix products stay at or above CHAIN_FLOOR, with the
    best product. A window's boundary-group discount is then the max
    over its straddlers' rows (multi-source Dijkstra decomposes over
    sources because every seed starts at 1.0).
    """
    rows = []
    total = 0
    for u in range(n_groups):
        best = _single_source_chain(u, indptr, indices, weights)
        row = [(v, r) for v, r in best.items() if v != u]
        rows.append(row)
        total += len(row)
    rptr = np.zeros(n_groups + 1, dtype=np.int64)
    rind = np.zeros(total, dtype=np.int32)
    rval = np.zeros(total, dtype=np.float64)
    pos = 0
    for u, row in enumerate(rows):
        for v, r in row:
            rind[pos] = v
            rval[pos] = r
            pos += 1
        rptr[u + 1] = pos
    return rptr, rind, rval


def score_boxes(boxes, labels, gmag, gbox, mstart, mx, my, mmag,
                rptr, rind, rval, integral, center_frac, perim_exp):
    """Contour score for each (x, y, w, h) window, all inside the grid.

    Groups fully inside a window contribute their magnitude weighted by
    1 - (max affinity-chain product to any group straddling the window
    boundary); straddling groups contribute nothing; the magnitude of
    edge pixels in the centered center_frac-shrunk window is subtracted;
    the result is clamped at 0 and divided by 2*(w+h)**perim_exp.
    (rptr, rind, rval) is the build_reach output for the affinity graph.
    """
    boxes = np.asarray(boxes, dtype=np.int32)
    n = boxes.shape[0]
    rho = np.zeros(n, dtype=np.float64)
    gx0, gy0, gx1, gy1 = (gbox[:, 0], gbox[:, 1], gbox[:, 2], gbox[:, 3]) \
        if len(gbox) else (None, None, None, None)
    for i in range(n):
        bx, by, bw, bh = (int(v) for v in boxes[i])
        acc = _rect_sum(integral, bx, by, bw, bh)
        if acc <= 0.0:
            continue
        lab = labels
        ring = [lab[by, bx:bx + bw], lab[by + bh - 1, bx:bx + bw]]
        if bh > 2:
            ring.append(lab[by + 1:by + bh - 1, bx])
            ring.append(lab[by + 1:by + bh - 1, bx + bw - 1])
        touched = np.unique(np.concatenate(ring))
        touched = touched[touched > 0] - 1  # to 0-based group ids
        x1, y1 = bx + bw - 1, by + bh - 1
        inside_t = (gx0[touched] >= bx) & (gy0[touched] >= by) \
            & (gx1[touched] <= x1) & (gy1[touched] <= y1)
        straddlers = touched[~inside_t]
        if len(straddlers):
            best = {}
            for s in straddlers:
                s = int(s)
                lo, hi = mstart[s], mstart[s + 1]
                px, py = mx[lo:hi], my[lo:hi]
                inb = (px >= bx) & (px <= x1) & (py >= by) & (py <= y1)
                acc -= float(np.sum(mmag[lo:hi][inb]))
                best[s] = 1.0
            for s in straddlers:
                s = int(s)
                for k in range(rptr[s], rptr[s + 1]):
                    v = int(rind[k])
                    if rval[k] > best.get(v, 0.0):
                        best[v] = rval[k]
            for g, v in best.items():
                if gx0[g] >= bx and gy0[g] >= by and gx1[g] <= x1 \
                        and gy1[g] <= y1:
                    acc -= v * gmag[g]
        iw, ih = int(bw * center_frac), int(bh * center_frac)
        if iw >= 1 and ih >= 1:
            acc -= _rect_sum(integral, bx + (bw - iw) // 2,
                             by + (bh - ih) // 2, iw, ih)
        if acc > 0.0:
            rho[i] = acc / (2.0 * (bw + bh) ** perim_exp)
    return rho


# neighbor moves: +/- one step in x, y, w, h (same order as compiled)
_MOVES = ((-1, 0, 0, 0), (1, 0, 0, 0), (0, -1, 0, 0), (0, 1, 0, 0),
          (0, 0, -1, 0), (0, 0, 1, 0), (0, 0, 0, -1), (0, 0, 0, 1))


def refine_boxes(boxes, steps, rho, labels, gmag, gbox, mstart, mx, my,
                 mmag, rptr, rind, rval, integral, center_frac, perim_exp,
                 span_w, span_h, rounds):
    """Greedy per-box hill climb over the score surface.

    Each box independently evaluates its 8 one-step neighbors, moves to
    the best strictly-improving one (first-listed wins ties), halves its
    step on failure, and stops once it is a local maximum at 1-pixel
    steps or the round cap is hit. Batched per round with a shared memo;
    per-box results match the compiled sequential climb.
    """
    boxes = np.array(boxes, dtype=np.int64, copy=True)
    steps = np.array(steps, dtype=np.int64, copy=True)
    rho = np.array(rho, dtype=np.float64, copy=True)

    def score(arr):
        return score_boxes(arr, labels, gmag, gbox, mstart, mx, my, mmag,
                           rptr, rind, rval, integral, center_frac,
                           perim_exp)

    cache = dict(zip(((boxes[:, 0] << 48) | (boxes[:, 1] << 32)
                      | (boxes[:, 2] << 16) | boxes[:, 3]).tolist(),
                     rho.tolist()))
    ix0 = np.clip(boxes[:, 0] - steps[:, 0], 0, span_w)
    iy0 = np.clip(boxes[:, 1] - steps[:, 1], 0, span_h)
    ix1 = np.clip(boxes[:, 0] + boxes[:, 2] + steps[:, 0], 0, span_w)
    iy1 = np.clip(boxes[:, 1] + boxes[:, 3] + steps[:, 1], 0, span_h)
    mass = integral[iy1, ix1] - integral[iy0, ix1] - integral[iy1, ix0] \
        + integral[iy0, ix0]
    active = np.nonzero(mass > 0.0)[0]
    for _ in range(rounds):
        if active.size == 0:
            break
        cur = boxes[active]
        st = steps[active]
        m = active.size
        neigh = np.repeat(cur[:, None, :], len(_MOVES), axis=1)
        for k, (mvx, mvy, mvw, mvh) in enumerate(_MOVES):
            neigh[:, k, 0] += mvx * st[:, 0]
            neigh[:, k, 1] += mvy * st[:, 1]
            neigh[:, k, 2] += mvw * st[:, 0]
            neigh[:, k, 3] += mvh * st[:, 1]
        flat = neigh.reshape(-1, 4)
        valid = ((flat[:, 0] >= 0) & (flat[:, 1] >= 0)
                 & (flat[:, 2] >= 1) & (flat[:, 3] >= 1)
                 & (flat[:, 0] + flat[:, 2] <= span_w)
                 & (flat[:, 1] + flat[:, 3] <= span_h))
        nrho = np.full(len(flat), -1.0)
        if valid.any():
            v = flat[valid]
            key = (v[:, 0] << 48) | (v[:, 1] << 32) | (v[:, 2] << 16) \
                | v[:, 3]
            uniq, first, inv = np.unique(key, return_index=True,
                                         return_inverse=True)
            vals = np.empty(len(uniq))
            missing = []
            for u, kk in enumerate(uniq.tolist()):
                hit = cache.get(kk)
                if hit is None:
                    missing.append(u)
                else:
                    vals[u] = hit
            if missing:
                fresh = score(v[first[missing]].astype(np.int32))
                for u, r in zip(missing, fresh.tolist()):
                    vals[u] = r
                    cache[int(uniq[u])] = r
            nrho[valid] = vals[inv]
        nrho = nrho.reshape(m, len(_MOVES))
        pick = np.argmax(nrho, axis=1)  # first index wins ties
        pick_rho = nrho[np.arange(m), pick]
        improved = pick_rho > rho[active]
        moved = active[improved]
        boxes[moved] = neigh[improved, pick[improved]]
        rho[moved] = pick_rho[improved]
        stuck = active[~improved]
        coarse = steps[stuck].max(axis=1) > 1
        steps[stuck] = np.maximum(steps[stuck] // 2, 1)
        active = np.concatenate([moved, stuck[coarse]])
    return boxes.astype(np.int32), rho


def nms_keep(boxes, iou_threshold, limit=-1):
    """Greedy suppression over boxes already sorted by preference.

    Keeps a box iff its IoU with every previously kept box is below
    iou_threshold. Returns kept indices in input order; limit < 0 means
    unlimited.
    """
    boxes = np.asarray(boxes, dtype=np.int64)
    kept: list[int] = []
    for i in range(boxes.shape[0]):
        if limit >= 0 and len(kept) >= limit:
            break
        x, y, w, h = boxes[i]
        ok = True
        for j in kept:
            kx, ky, kw, kh = boxes[j]
            iw = min(x + w, kx + kw) - max(x, kx)
            if iw <= 0:
                continue
            ih = min(y + h, ky + kh) - max(y, ky)
            if ih <= 0:
                continue
            inter = iw * ih
            if inter / (w * h + kw * kh - inter) >= iou_threshold:
                ok = False
                break
        if ok:
            kept.append(i)
    return np.asarray(kept, dtype=np.int64)
