"""Hot numeric kernels.

Each kernel has a numba implementation (scalar loops compiled with
``@njit``) and a pure-numpy implementation. The numba path is used unless
numba is missing or ``TTESSEL_DISABLE_NUMBA`` is set to a truthy value.
Both paths consume identical inputs (random numbers are always drawn by the
caller) so they return the same results up to floating point rounding.
"""
import math
import os

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None


def _numba_requested():
    flag = os.environ.get("TTESSEL_DISABLE_NUMBA", "").strip().lower()
    return flag in ("", "0", "false", "no")


USE_NUMBA = njit is not None and _numba_requested()
BACKEND = "numba" if USE_NUMBA else "numpy"


def _jit(fn):
    if njit is None:
        return fn
    return njit(cache=True)(fn)


# --------------------------------------------------------------------------
# Dummy-split candidates
#
# A candidate is (cell, alpha, u_acc, u_pos). The isotropic line hitting the
# cell is accepted when u_acc * diameter <= width(alpha), then placed at
# p = p_min + u_pos * width. Status: 1 valid chord, 0 rejected by the width
# test, -1 degenerate (passes within eps of a cell vertex).
# --------------------------------------------------------------------------

SPLIT_FIELDS = (
    "status", "p", "edge_a", "edge_b", "ax", "ay", "bx", "by",
    "area_a", "area_b", "angle_a", "angle_b", "length",
)


def _split_candidates_loop(offsets, vx, vy, e_alpha, e_p, e_int, cell_diam,
                           cand_cell, cand_alpha, cand_uacc, cand_upos, eps):
    m = cand_cell.shape[0]
    status = np.zeros(m, np.int8)
    pv = np.zeros(m)
    edge_a = np.full(m, -1, np.int64)
    edge_b = np.full(m, -1, np.int64)
    ax = np.zeros(m)
    ay = np.zeros(m)
    bx = np.zeros(m)
    by = np.zeros(m)
    area_a = np.zeros(m)
    area_b = np.zeros(m)
    angle_a = np.zeros(m)
    angle_b = np.zeros(m)
    length = np.zeros(m)
    half_pi = 0.5 * math.pi
    for c in range(m):
        cell = cand_cell[c]
        k0 = offsets[cell]
        n = offsets[cell + 1] - k0
        alpha = cand_alpha[c]
        ca = math.cos(alpha)
        sa = math.sin(alpha)
        smin = math.inf
        smax = -math.inf
        for k in range(k0, k0 + n):
            s = ca * vx[k] + sa * vy[k]
            if s < smin:
                smin = s
            if s > smax:
                smax = s
        w = smax - smin
        if cand_uacc[c] * cell_diam[cell] > w:
            continue
        p = smin + cand_upos[c] * w
        pv[c] = p
        i = -1
        j = -1
        bad = False
        for k in range(n):
            kn = k + 1 if k + 1 < n else 0
            d0 = ca * vx[k0 + k] + sa * vy[k0 + k] - p
            d1 = ca * vx[k0 + kn] + sa * vy[k0 + kn] - p
            if abs(d0) <= eps:
                bad = True
                break
            if d0 < 0.0 and d1 > 0.0:
                i = k
            elif d0 > 0.0 and d1 < 0.0:
                j = k
        if bad or i < 0 or j < 0:
            status[c] = -1
            continue
        ei = k0 + i
        ej = k0 + j
        ci = math.cos(e_alpha[ei])
        si = math.sin(e_alpha[ei])
        cj = math.cos(e_alpha[ej])
        sj = math.sin(e_alpha[ej])
        det_i = ca * si - sa * ci
        det_j = ca * sj - sa * cj
        if abs(det_i) < 1e-12 or abs(det_j) < 1e-12:
            status[c] = -1
            continue
        xa = (p * si - sa * e_p[ei]) / det_i
        ya = (ca * e_p[ei] - p * ci) / det_i
        xb = (p * sj - sa * e_p[ej]) / det_j
        yb = (ca * e_p[ej] - p * cj) / det_j
        # polygon a, v[i+1], ..., v[j], b
        acc = 0.0
        px = xa
        py = ya
        k = i + 1 if i + 1 < n else 0
        while True:
            qx = vx[k0 + k]
            qy = vy[k0 + k]
            acc += px * qy - qx * py
            px = qx
            py = qy
            if k == j:
                break
            k = k + 1 if k + 1 < n else 0
        acc += px * yb - xb * py + xb * ya - xa * yb
        area_a[c] = 0.5 * acc
        # polygon b, v[j+1], ..., v[i], a
        acc = 0.0
        px = xb
        py = yb
        k = j + 1 if j + 1 < n else 0
        while True:
            qx = vx[k0 + k]
            qy = vy[k0 + k]
            acc += px * qy - qx * py
            px = qx
            py = qy
            if k == i:
                break
            k = k + 1 if k + 1 < n else 0
        acc += px * ya - xa * py + xa * yb - xb * ya
        area_b[c] = 0.5 * acc
        if e_int[ei]:
            d = abs(alpha - e_alpha[ei]) % math.pi
            angle_a[c] = half_pi - min(d, math.pi - d)
        if e_int[ej]:
            d = abs(alpha - e_alpha[ej]) % math.pi
            angle_b[c] = half_pi - min(d, math.pi - d)
        status[c] = 1
        edge_a[c] = i
        edge_b[c] = j
        ax[c] = xa
        ay[c] = ya
        bx[c] = xb
        by[c] = yb
        length[c] = math.hypot(xb - xa, yb - ya)
    return (status, pv, edge_a, edge_b, ax, ay, bx, by,
            area_a, area_b, angle_a, angle_b, length)


def _split_candidates_numpy(offsets, vx, vy, e_alpha, e_p, e_int, cell_diam,
                            cand_cell, cand_alpha, cand_uacc, cand_upos, eps):
    m = cand_cell.shape[0]
    sizes = np.diff(offsets)
    kmax = int(sizes.max()) if sizes.size else 0
    n_c = sizes[cand_cell]
    start = offsets[:-1][cand_cell]
    col = np.arange(kmax)[None, :]
    mask = col < n_c[:, None]
    idx = start[:, None] + np.minimum(col, n_c[:, None] - 1)
    X = vx[idx]
    Y = vy[idx]
    ca = np.cos(cand_alpha)
    sa = np.sin(cand_alpha)
    s = ca[:, None] * X + sa[:, None] * Y
    smin = np.where(mask, s, np.inf).min(axis=1)
    smax = np.where(mask, s, -np.inf).max(axis=1)
    w = smax - smin
    accepted = cand_uacc * cell_diam[cand_cell] <= w
    p = np.where(accepted, smin + cand_upos * w, 0.0)
    d = s - p[:, None]
    nxt = np.where(col + 1 < n_c[:, None], col + 1, 0)
    dn = np.take_along_axis(d, nxt, axis=1)
    degenerate = (mask & (np.abs(d) <= eps)).any(axis=1)
    up = mask & (d < 0) & (dn > 0)
    down = mask & (d > 0) & (dn < 0)
    i = up.argmax(axis=1)
    j = down.argmax(axis=1)
    ok = accepted & ~degenerate & up.any(axis=1) & down.any(axis=1)

    ei = start + i
    ej = start + j
    ci, si = np.cos(e_alpha[ei]), np.sin(e_alpha[ei])
    cj, sj = np.cos(e_alpha[ej]), np.sin(e_alpha[ej])
    det_i = ca * si - sa * ci
    det_j = ca * sj - sa * cj
    ok &= (np.abs(det_i) >= 1e-12) & (np.abs(det_j) >= 1e-12)
    with np.errstate(divide="ignore", invalid="ignore"):
        xa = (p * si - sa * e_p[ei]) / det_i
        ya = (ca * e_p[ei] - p * ci) / det_i
        xb = (p * sj - sa * e_p[ej]) / det_j
        yb = (ca * e_p[ej] - p * cj) / det_j

    Xn = np.take_along_axis(X, nxt, axis=1)
    Yn = np.take_along_axis(Y, nxt, axis=1)
    cross = X * Yn - Xn * Y
    rows = np.arange(m)
    n_safe = np.maximum(n_c, 1)

    def part_area(i0, j0, x0, y0, x1, y1):
        # polygon (x0,y0), v[i0+1], ..., v[j0], (x1,y1)
        first = (i0 + 1) % n_safe
        r = (col - first[:, None]) % n_safe[:, None]
        span = (j0 - first) % n_safe
        inner = (cross * (mask & (r < span[:, None]))).sum(axis=1)
        fx, fy = X[rows, first], Y[rows, first]
        lx, ly = X[rows, j0], Y[rows, j0]
        acc = inner + (x0 * fy - fx * y0) + (lx * y1 - x1 * ly) + (x1 * y0 - x0 * y1)
        return 0.5 * acc

    with np.errstate(invalid="ignore"):
        area_a = part_area(i, j, xa, ya, xb, yb)
        area_b = part_area(j, i, xb, yb, xa, ya)
        da = np.abs(cand_alpha - e_alpha[ei]) % np.pi
        db = np.abs(cand_alpha - e_alpha[ej]) % np.pi
        angle_a = (0.5 * np.pi - np.minimum(da, np.pi - da)) * e_int[ei]
        angle_b = (0.5 * np.pi - np.minimum(db, np.pi - db)) * e_int[ej]
        length = np.hypot(xb - xa, yb - ya)

    status = np.where(accepted, np.where(ok, 1, -1), 0).astype(np.int8)
    z = np.zeros(m)

    def keep(a, fill=0.0):
        return np.where(ok, a, fill)

    return (status, np.where(accepted, p, 0.0),
            np.where(ok, i, -1).astype(np.int64), np.where(ok, j, -1).astype(np.int64),
            keep(xa), keep(ya), keep(xb), keep(yb),
            keep(area_a), keep(area_b), keep(angle_a) + z, keep(angle_b) + z,
            keep(length))


# --------------------------------------------------------------------------
# Neighbour counts within a radius
# --------------------------------------------------------------------------

def _neighbour_counts_loop(qx, qy, px, py, r):
    m = qx.shape[0]
    n = px.shape[0]
    out = np.zeros(m, np.int64)
    r2 = r * r
    for a in range(m):
        cnt = 0
        for b in range(n):
            dx = qx[a] - px[b]
            dy = qy[a] - py[b]
            if dx * dx + dy * dy <= r2:
                cnt += 1
        out[a] = cnt
    return out


def _neighbour_counts_numpy(qx, qy, px, py, r, chunk=4096):
    out = np.zeros(qx.shape[0], np.int64)
    if px.shape[0] == 0:
        return out
    r2 = r * r
    for lo in range(0, qx.shape[0], chunk):
        hi = lo + chunk
        dx = qx[lo:hi, None] - px[None, :]
        dy = qy[lo:hi, None] - py[None, :]
        out[lo:hi] = (dx * dx + dy * dy <= r2).sum(axis=1)
    return out


# --------------------------------------------------------------------------
# Strauss birth-death Metropolis-Hastings
#
# Density exp(theta1 n(X) - theta2 s_R(X)) w.r.t. the unit-rate Poisson
# process. Births at pre-drawn uniform locations; u_move < 0.5 selects a
# birth. Returns the final pattern and a status (0 ok, 1 capacity hit).
# --------------------------------------------------------------------------

def _strauss_loop(x0, y0, bx, by, u_move, u_pick, u_acc,
                  theta1, theta2, r, area, capacity):
    xs = np.empty(capacity)
    ys = np.empty(capacity)
    n = x0.shape[0]
    if n > capacity:
        return xs[:0], ys[:0], 1
    xs[:n] = x0
    ys[:n] = y0
    r2 = r * r
    for t in range(u_move.shape[0]):
        if u_move[t] < 0.5:
            ux = bx[t]
            uy = by[t]
            cnt = 0
            for b in range(n):
                dx = xs[b] - ux
                dy = ys[b] - uy
                if dx * dx + dy * dy <= r2:
                    cnt += 1
            ratio = math.exp(theta1 - theta2 * cnt) * area / (n + 1)
            if u_acc[t] < ratio:
                if n == capacity:
                    return xs[:n].copy(), ys[:n].copy(), 1
                xs[n] = ux
                ys[n] = uy
                n += 1
        elif n > 0:
            k = int(u_pick[t] * n)
            if k >= n:
                k = n - 1
            cnt = 0
            for b in range(n):
                if b == k:
                    continue
                dx = xs[b] - xs[k]
                dy = ys[b] - ys[k]
                if dx * dx + dy * dy <= r2:
                    cnt += 1
            ratio = n / (area * math.exp(theta1 - theta2 * cnt))
            if u_acc[t] < ratio:
                xs[k] = xs[n - 1]
                ys[k] = ys[n - 1]
                n -= 1
    return xs[:n].copy(), ys[:n].copy(), 0


def _strauss_numpy(x0, y0, bx, by, u_move, u_pick, u_acc,
                   theta1, theta2, r, area, capacity):
    n = x0.shape[0]
    if n > capacity:
        return np.empty(0), np.empty(0), 1
    xs = np.empty(capacity)
    ys = np.empty(capacity)
    xs[:n] = x0
    ys[:n] = y0
    r2 = r * r
    for t in range(u_move.shape[0]):
        if u_move[t] < 0.5:
            d2 = (xs[:n] - bx[t]) ** 2 + (ys[:n] - by[t]) ** 2
            cnt = int(np.count_nonzero(d2 <= r2))
            ratio = math.exp(theta1 - theta2 * cnt) * area / (n + 1)
            if u_acc[t] < ratio:
                if n == capacity:
                    return xs[:n].copy(), ys[:n].copy(), 1
                xs[n] = bx[t]
                ys[n] = by[t]
                n += 1
        elif n > 0:
            k = min(int(u_pick[t] * n), n - 1)
            d2 = (xs[:n] - xs[k]) ** 2 + (ys[:n] - ys[k]) ** 2
            cnt = int(np.count_nonzero(d2 <= r2)) - 1
            ratio = n / (area * math.exp(theta1 - theta2 * cnt))
            if u_acc[t] < ratio:
                xs[k] = xs[n - 1]
                ys[k] = ys[n - 1]
                n -= 1
    return xs[:n].copy(), ys[:n].copy(), 0


_split_candidates_jit = _jit(_split_candidates_loop)
_neighbour_counts_jit = _jit(_neighbour_counts_loop)
_strauss_jit = _jit(_strauss_loop)

IMPLEMENTATIONS = {
    "split_candidates": {"numba": _split_candidates_jit, "numpy": _split_candidates_numpy},
    "neighbour_counts": {"numba": _neighbour_counts_jit, "numpy": _neighbour_counts_numpy},
    "strauss_birth_death": {"numba": _strauss_jit, "numpy": _strauss_numpy},
}


def _pick(name):
    return IMPLEMENTATIONS[name][BACKEND]


def split_candidates(offsets, vx, vy, e_alpha, e_p, e_int, cell_diam,
                     cand_cell, cand_alpha, cand_uacc, cand_upos, eps):
    """Evaluate candidate isotropic chords of tessellation cells.

    Returns a dict keyed by ``SPLIT_FIELDS``.
    """
    args = (
        np.ascontiguousarray(offsets, np.int64), np.ascontiguousarray(vx, np.float64),
        np.ascontiguousarray(vy, np.float64), np.ascontiguousarray(e_alpha, np.float64),
        np.ascontiguousarray(e_p, np.float64), np.ascontiguousarray(e_int, np.bool_),
        np.ascontiguousarray(cell_diam, np.float64), np.ascontiguousarray(cand_cell, np.int64),
        np.ascontiguousarray(cand_alpha, np.float64), np.ascontiguousarray(cand_uacc, np.float64),
        np.ascontiguousarray(cand_upos, np.float64), float(eps),
    )
    return dict(zip(SPLIT_FIELDS, _pick("split_candidates")(*args)))


def neighbour_counts(query, points, r):
    """Number of ``points`` within distance ``r`` (inclusive) of each query."""
    q = np.asarray(query, np.float64).reshape(-1, 2)
    pts = np.asarray(points, np.float64).reshape(-1, 2)
    return _pick("neighbour_counts")(
        np.ascontiguousarray(q[:, 0]), np.ascontiguousarray(q[:, 1]),
        np.ascontiguousarray(pts[:, 0]), np.ascontiguousarray(pts[:, 1]), float(r))


def strauss_birth_death(start, births, u_move, u_pick, u_acc,
                        theta1, theta2, r, area, capacity):
    start = np.asarray(start, np.float64).reshape(-1, 2)
    births = np.asarray(births, np.float64).reshape(-1, 2)
    xs, ys, code = _pick("strauss_birth_death")(
        np.ascontiguousarray(start[:, 0]), np.ascontiguousarray(start[:, 1]),
        np.ascontiguousarray(births[:, 0]), np.ascontiguousarray(births[:, 1]),
        np.ascontiguousarray(u_move, np.float64), np.ascontiguousarray(u_pick, np.float64),
        np.ascontiguousarray(u_acc, np.float64), float(theta1), float(theta2),
        float(r), float(area), int(capacity))
    return np.column_stack([xs, ys]), int(code)
