"""Independent reference implementations used to pin expected values.

Everything here recomputes results by brute force (per-pixel counting,
rasterization, exhaustive relaxation) and deliberately avoids the fast
paths it is used to check.
"""

import math

import numpy as np


def naive_box_sum(grid, x, y, w, h):
    """Direct summation over the clipped rectangle."""
    gh, gw = grid.shape
    x0, y0 = max(0, x), max(0, y)
    x1, y1 = min(gw, x + w), min(gh, y + h)
    total = 0.0
    for yy in range(y0, y1):
        for xx in range(x0, x1):
            total += float(grid[yy, xx])
    return total


def raster_pixels(box):
    return {(xx, yy) for yy in range(box.y, box.y + box.h)
            for xx in range(box.x, box.x + box.w)}


def raster_iou(a, b):
    """IoU by explicit pixel-set rasterization."""
    pa, pb = raster_pixels(a), raster_pixels(b)
    union = len(pa | pb)
    return len(pa & pb) / union if union else 0.0


def raster_intersection_area(a, b):
    return len(raster_pixels(a) & raster_pixels(b))


def counting_histogram(values, bins):
    """Normalized histogram of precomputed bin indices by dict counting."""
    counts = {}
    for v in values:
        counts[int(v)] = counts.get(int(v), 0) + 1
    n = len(values)
    out = np.zeros(max(counts) + 1 if counts else 1)
    for k, c in counts.items():
        out[k] = c / n
    return out


def chain_walk_score(box, members, magnitude_grid, affinity_pairs,
                     center_shrink=0.5, perimeter_exponent=1.5):
    """Contour score by explicit member-pixel walks.

    members: list of (n, 2) arrays of (x, y) pixel coords per group.
    affinity_pairs: {(i, j): affinity} with 1-based i < j.
    Group magnitudes, containment, straddling, chain products and the
    center penalty are all recomputed from the raw pixel lists; chain
    reachability uses Bellman-Ford-style relaxation to a fixed point,
    with products below the 0.05 sparsity floor treated as broken.
    """
    x1, y1 = box.x + box.w - 1, box.y + box.h - 1

    def inside(px, py):
        return box.x <= px <= x1 and box.y <= py <= y1

    n_groups = len(members)
    fully_inside, straddlers = [], []
    gmag = []
    for g in range(n_groups):
        pts = members[g]
        cnt = sum(1 for px, py in pts if inside(px, py))
        gmag.append(sum(float(magnitude_grid[py, px]) for px, py in pts))
        if cnt == len(pts):
            fully_inside.append(g + 1)
        elif cnt > 0:
            straddlers.append(g + 1)

    best = {g: 1.0 for g in straddlers}
    for _ in range(n_groups):
        changed = False
        for (i, j), a in affinity_pairs.items():
            for src, dst in ((i, j), (j, i)):
                if src in best:
                    cand = best[src] * a
                    if cand >= 0.05 and cand > best.get(dst, 0.0):
                        best[dst] = cand
                        changed = True
        if not changed:
            break

    acc = sum((1.0 - best.get(g, 0.0)) * gmag[g - 1] for g in fully_inside)

    iw, ih = int(box.w * center_shrink), int(box.h * center_shrink)
    if iw >= 1 and ih >= 1:
        ix, iy = box.x + (box.w - iw) // 2, box.y + (box.h - ih) // 2
        ix1, iy1 = ix + iw - 1, iy + ih - 1
        for pts in members:
            for px, py in pts:
                if ix <= px <= ix1 and iy <= py <= iy1:
                    acc -= float(magnitude_grid[py, px])
    if acc <= 0.0:
        return 0.0
    return acc / (2.0 * (box.w + box.h) ** perimeter_exponent)


def quadratic_nms(boxes, threshold):
    """O(n^2) greedy suppression with its own overlap arithmetic."""
    def overlap(a, b):
        ix = max(0, min(a[0] + a[2], b[0] + b[2]) - max(a[0], b[0]))
        iy = max(0, min(a[1] + a[3], b[1] + b[3]) - max(a[1], b[1]))
        inter = ix * iy
        if inter == 0:
            return 0.0
        return inter / (a[2] * a[3] + b[2] * b[3] - inter)

    kept = []
    for i, b in enumerate(boxes):
        if all(overlap(b, boxes[j]) < threshold for j in kept):
            kept.append(i)
    return kept


def naive_rank(entries, rho_t, response_values, origin, target_w, target_h,
               normalized_size=True):
    """Recompute affinities with plain Python math and stable-sort.

    entries: list of (box, rho, source). Returns the reordered indices.
    """
    ox, oy = origin
    h, w = response_values.shape
    scored = []
    for idx, (box, rho, source) in enumerate(entries):
        s = math.exp(-abs(rho - rho_t))
        rx0, ry0 = max(box.x - ox, 0), max(box.y - oy, 0)
        rx1 = min(box.x - ox + box.w, w)
        ry1 = min(box.y - oy + box.h, h)
        vals = [float(response_values[yy, xx])
                for yy in range(ry0, ry1) for xx in range(rx0, rx1)]
        c = sum(vals) / len(vals)
        if normalized_size:
            z = math.exp(-abs(box.w - target_w) / target_w) \
                * math.exp(-abs(box.h - target_h) / target_h)
        else:
            z = math.exp(-abs(box.w - target_w)) \
                * math.exp(-abs(box.h - target_h))
        a = s * c * z
        scored.append((idx, a, rho, box, source))
    scored.sort(key=lambda t: (-t[1], -t[2], t[3].x, t[3].y, t[3].w, t[3].h,
                               t[4]))
    return [t[0] for t in scored]
