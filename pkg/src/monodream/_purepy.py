"""Pure-Python/numpy versions of the geometry kernels in ``_kernels.pyx``."""
from __future__ import annotations

import heapq
import math

import numpy as np

SQRT2 = 1.4142135623730951


def cast_rays(ox: float, oy: float, angles: np.ndarray, walls: np.ndarray, d_max: float):
    angles = np.asarray(angles, dtype=np.float64)
    n = angles.shape[0]
    if walls.shape[0] == 0:
        return np.full(n, float(d_max)), np.full(n, -1, dtype=np.intp)
    dx = np.cos(angles)[:, None]
    dy = np.sin(angles)[:, None]
    ex = (walls[:, 2] - walls[:, 0])[None, :]
    ey = (walls[:, 3] - walls[:, 1])[None, :]
    wx = (walls[:, 0] - ox)[None, :]
    wy = (walls[:, 1] - oy)[None, :]
    den = dx * ey - dy * ex
    ok = np.abs(den) >= 1e-12
    safe = np.where(ok, den, 1.0)
    t = (wx * ey - wy * ex) / safe
    u = (wx * dy - wy * dx) / safe
    hit = ok & (t > 1e-9) & (u >= 0.0) & (u <= 1.0)
    t = np.where(hit, t, np.inf)
    idx = np.argmin(t, axis=1)
    best = t[np.arange(n), idx]
    any_hit = np.isfinite(best)
    idx = np.where(any_hit, idx, -1).astype(np.intp)
    dist = np.where(any_hit & (best < d_max), best, float(d_max))
    return dist, idx


def _point_segment(px, py, ax, ay, bx, by):
    ex, ey = bx - ax, by - ay
    ll = ex * ex + ey * ey
    s = 0.0
    if ll > 0.0:
        s = ((px - ax) * ex + (py - ay) * ey) / ll
        s = min(max(s, 0.0), 1.0)
    qx = ax + s * ex - px
    qy = ay + s * ey - py
    return math.sqrt(qx * qx + qy * qy)


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def segment_clearance(ax: float, ay: float, bx: float, by: float, walls: np.ndarray) -> float:
    best = math.inf
    for x0, y0, x1, y1 in walls.tolist():
        o1 = _orient(ax, ay, bx, by, x0, y0)
        o2 = _orient(ax, ay, bx, by, x1, y1)
        o3 = _orient(x0, y0, x1, y1, ax, ay)
        o4 = _orient(x0, y0, x1, y1, bx, by)
        if ((o1 > 0 and o2 < 0) or (o1 < 0 and o2 > 0)) and ((o3 > 0 and o4 < 0) or (o3 < 0 and o4 > 0)):
            return 0.0
        best = min(
            best,
            _point_segment(ax, ay, x0, y0, x1, y1),
            _point_segment(bx, by, x0, y0, x1, y1),
            _point_segment(x0, y0, ax, ay, bx, by),
            _point_segment(x1, y1, ax, ay, bx, by),
        )
    return best


_MOVES = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1))


def grid_astar(blocked: np.ndarray, si: int, sj: int, gi: int, gj: int):
    nx, ny = blocked.shape
    grid = blocked.tolist()
    if grid[si][sj] or grid[gi][gj]:
        return None
    start = si * ny + sj
    goal = gi * ny + gj
    g = {start: 0.0}
    parent = {start: -1}
    closed = set()

    def h(i, j):
        adx = abs(i - gi)
        ady = abs(j - gj)
        return (adx + ady) + (SQRT2 - 2.0) * (adx if adx < ady else ady)

    seq = 0
    heap = [(h(si, sj), seq, start)]
    seq += 1
    found = False
    while heap:
        _, _, node = heapq.heappop(heap)
        if node in closed:
            continue
        closed.add(node)
        if node == goal:
            found = True
            break
        ci, cj = divmod(node, ny)
        gn = g[node]
        for k, (di, dj) in enumerate(_MOVES):
            ni, nj = ci + di, cj + dj
            if ni < 0 or nj < 0 or ni >= nx or nj >= ny or grid[ni][nj]:
                continue
            if k >= 4:
                if grid[ci + di][cj] or grid[ci][cj + dj]:
                    continue
                step = SQRT2
            else:
                step = 1.0
            nb = ni * ny + nj
            if nb in closed:
                continue
            ng = gn + step
            if ng < g.get(nb, math.inf):
                g[nb] = ng
                parent[nb] = node
                heapq.heappush(heap, (ng + h(ni, nj), seq, nb))
                seq += 1
    if not found:
        return None
    cells = []
    node = goal
    while node != -1:
        cells.append(divmod(node, ny))
        node = parent[node]
    cells.reverse()
    return np.asarray(cells, dtype=np.int64)
