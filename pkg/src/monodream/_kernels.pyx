# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled geometry kernels.

Semantics are identical to ``monodream._purepy``; the test-suite runs both
backends against each other.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, sqrt, fabs, INFINITY

cnp.import_array()

cdef double SQRT2 = 1.4142135623730951


def cast_rays(double ox, double oy, const double[::1] angles, const double[:, ::1] walls, double d_max):
    """Nearest wall hit for each ray angle (radians). Returns (distance, wall index)."""
    cdef Py_ssize_t n = angles.shape[0]
    cdef Py_ssize_t m = walls.shape[0]
    dist_arr = np.empty(n, dtype=np.float64)
    idx_arr = np.empty(n, dtype=np.intp)
    cdef double[::1] dist = dist_arr
    cdef Py_ssize_t[::1] idx = idx_arr
    cdef Py_ssize_t i, j, bi
    cdef double dx, dy, ex, ey, wx, wy, den, t, u, best
    for i in range(n):
        dx = cos(angles[i])
        dy = sin(angles[i])
        best = INFINITY
        bi = -1
        for j in range(m):
            ex = walls[j, 2] - walls[j, 0]
            ey = walls[j, 3] - walls[j, 1]
            den = dx * ey - dy * ex
            if fabs(den) < 1e-12:
                continue
            wx = walls[j, 0] - ox
            wy = walls[j, 1] - oy
            t = (wx * ey - wy * ex) / den
            u = (wx * dy - wy * dx) / den
            if t > 1e-9 and u >= 0.0 and u <= 1.0 and t < best:
                best = t
                bi = j
        if bi >= 0 and best < d_max:
            dist[i] = best
        else:
            dist[i] = d_max
        idx[i] = bi
    return dist_arr, idx_arr


cdef inline double _point_segment(double px, double py, double ax, double ay,
                                  double bx, double by) nogil:
    cdef double ex = bx - ax, ey = by - ay
    cdef double ll = ex * ex + ey * ey
    cdef double s = 0.0
    if ll > 0.0:
        s = ((px - ax) * ex + (py - ay) * ey) / ll
        if s < 0.0:
            s = 0.0
        elif s > 1.0:
            s = 1.0
    cdef double qx = ax + s * ex - px, qy = ay + s * ey - py
    return sqrt(qx * qx + qy * qy)


cdef inline double _orient(double ax, double ay, double bx, double by,
                           double cx, double cy) nogil:
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def segment_clearance(double ax, double ay, double bx, double by, const double[:, ::1] walls):
    """Minimum distance between segment a-b and any wall segment."""
    cdef Py_ssize_t m = walls.shape[0]
    cdef Py_ssize_t j
    cdef double best = INFINITY, d, x0, y0, x1, y1, o1, o2, o3, o4
    for j in range(m):
        x0 = walls[j, 0]
        y0 = walls[j, 1]
        x1 = walls[j, 2]
        y1 = walls[j, 3]
        o1 = _orient(ax, ay, bx, by, x0, y0)
        o2 = _orient(ax, ay, bx, by, x1, y1)
        o3 = _orient(x0, y0, x1, y1, ax, ay)
        o4 = _orient(x0, y0, x1, y1, bx, by)
        if ((o1 > 0.0 and o2 < 0.0) or (o1 < 0.0 and o2 > 0.0)) and \
           ((o3 > 0.0 and o4 < 0.0) or (o3 < 0.0 and o4 > 0.0)):
            return 0.0
        d = _point_segment(ax, ay, x0, y0, x1, y1)
        if d < best:
            best = d
        d = _point_segment(bx, by, x0, y0, x1, y1)
        if d < best:
            best = d
        d = _point_segment(x0, y0, ax, ay, bx, by)
        if d < best:
            best = d
        d = _point_segment(x1, y1, ax, ay, bx, by)
        if d < best:
            best = d
    return best


# --- binary min-heap keyed on (f, seq) -------------------------------------

cdef inline bint _less(double[::1] hf, long[::1] hs, Py_ssize_t a, Py_ssize_t b) nogil:
    if hf[a] < hf[b]:
        return True
    if hf[a] > hf[b]:
        return False
    return hs[a] < hs[b]


cdef inline void _swap(double[::1] hf, long[::1] hs, long[::1] hn,
                       Py_ssize_t a, Py_ssize_t b) nogil:
    cdef double tf = hf[a]
    cdef long ts = hs[a], tn = hn[a]
    hf[a] = hf[b]
    hs[a] = hs[b]
    hn[a] = hn[b]
    hf[b] = tf
    hs[b] = ts
    hn[b] = tn


def grid_astar(const cnp.uint8_t[:, ::1] blocked, int si, int sj, int gi, int gj):
    """Octile A* without corner cutting. Returns the cell path as an (n, 2) array or None."""
    cdef int nx = blocked.shape[0], ny = blocked.shape[1]
    cdef Py_ssize_t ncell = nx * ny
    if blocked[si, sj] or blocked[gi, gj]:
        return None
    g_arr = np.full(ncell, INFINITY)
    parent_arr = np.full(ncell, -1, dtype=np.int64)
    closed_arr = np.zeros(ncell, dtype=np.uint8)
    cdef double[::1] g = g_arr
    cdef long[::1] parent = parent_arr
    cdef cnp.uint8_t[::1] closed = closed_arr
    cdef Py_ssize_t cap = 8 * ncell + 16
    hf_arr = np.empty(cap)
    hs_arr = np.empty(cap, dtype=np.int64)
    hn_arr = np.empty(cap, dtype=np.int64)
    cdef double[::1] hf = hf_arr
    cdef long[::1] hs = hs_arr
    cdef long[::1] hn = hn_arr
    cdef Py_ssize_t size = 0, pos, child, parent_pos
    cdef long seq = 0
    cdef long start = si * ny + sj, goal = gi * ny + gj, node, nb
    cdef int ci, cj, ni, nj, k, adx, ady
    cdef double step, ng, h
    cdef int[8] di = [1, -1, 0, 0, 1, 1, -1, -1]
    cdef int[8] dj = [0, 0, 1, -1, 1, -1, 1, -1]

    g[start] = 0.0
    adx = abs(si - gi)
    ady = abs(sj - gj)
    h = (adx + ady) + (SQRT2 - 2.0) * (adx if adx < ady else ady)
    hf[0] = h
    hs[0] = seq
    hn[0] = start
    seq += 1
    size = 1
    found = False
    while size > 0:
        node = hn[0]
        # pop
        size -= 1
        if size > 0:
            hf[0] = hf[size]
            hs[0] = hs[size]
            hn[0] = hn[size]
            pos = 0
            while True:
                child = 2 * pos + 1
                if child >= size:
                    break
                if child + 1 < size and _less(hf, hs, child + 1, child):
                    child += 1
                if _less(hf, hs, child, pos):
                    _swap(hf, hs, hn, child, pos)
                    pos = child
                else:
                    break
        if closed[node]:
            continue
        closed[node] = 1
        if node == goal:
            found = True
            break
        ci = node // ny
        cj = node % ny
        for k in range(8):
            ni = ci + di[k]
            nj = cj + dj[k]
            if ni < 0 or nj < 0 or ni >= nx or nj >= ny:
                continue
            if blocked[ni, nj]:
                continue
            if k >= 4:
                if blocked[ci + di[k], cj] or blocked[ci, cj + dj[k]]:
                    continue
                step = SQRT2
            else:
                step = 1.0
            nb = ni * ny + nj
            if closed[nb]:
                continue
            ng = g[node] + step
            if ng < g[nb]:
                g[nb] = ng
                parent[nb] = node
                adx = abs(ni - gi)
                ady = abs(nj - gj)
                h = (adx + ady) + (SQRT2 - 2.0) * (adx if adx < ady else ady)
                pos = size
                size += 1
                hf[pos] = ng + h
                hs[pos] = seq
                hn[pos] = nb
                seq += 1
                while pos > 0:
                    parent_pos = (pos - 1) // 2
                    if _less(hf, hs, pos, parent_pos):
                        _swap(hf, hs, hn, pos, parent_pos)
                        pos = parent_pos
                    else:
                        break
    if not found:
        return None
    cells = []
    node = goal
    while node != -1:
        cells.append((node // ny, node % ny))
        node = parent[node]
    cells.reverse()
    return np.asarray(cells, dtype=np.int64)
