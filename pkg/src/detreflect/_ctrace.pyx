# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled ray tracing kernel.  Same algorithm and arithmetic as ``_pytrace``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, cos, sin, atan2, copysign, fabs, INFINITY, NAN, M_PI

cnp.import_array()

DEF STACK = 128
cdef int RETURNED = 0
cdef int MAX_BOUNCES = 1
cdef int LOST = 2
cdef double GRAZE_TOL = 1e-12
cdef double TANGENT_TOL = 1e-15


cdef struct Scene:
    const double* arcs
    const double* segs
    const double* boxes
    const long long* nodes
    const long long* order
    long long na
    long long nn
    double fy
    double fx0
    double fx1


cdef struct Near:
    double best_t
    long long best_id
    double second_t
    int degenerate


cdef inline void _consider(Near* r, double t, long long pid) noexcept nogil:
    if t < r.best_t:
        r.second_t = r.best_t
        r.best_t = t
        r.best_id = pid
    elif t < r.second_t:
        r.second_t = t


cdef Near _nearest(const Scene* S, double ox, double oy, double dx, double dy,
                   double t_eps, double t_max) noexcept nogil:
    cdef Near r
    r.best_t = t_max
    r.best_id = -1
    r.second_t = INFINITY
    r.degenerate = 0
    cdef double idx = 1.0 / dx if dx != 0.0 else INFINITY
    cdef double idy = 1.0 / dy if dy != 0.0 else INFINITY
    cdef long long stack[STACK]
    cdef int sp = 0
    cdef long long ni, k, pid, left
    cdef double t1, t2, t3, t4, tn, tf, tmp
    cdef const double* b
    cdef const double* A
    cdef double px, py, lox, loy, ldx, ldy, qa, qb, qc, disc, q, r0, r1, t, hx, hy
    cdef double x0, y0, ex, ey, den, wx, wy, s
    cdef int which
    if S.nn > 0:
        stack[0] = 0
        sp = 1
    while sp > 0:
        sp -= 1
        ni = stack[sp]
        b = S.boxes + 4 * ni
        if dx != 0.0:
            t1 = (b[0] - ox) * idx
            t2 = (b[2] - ox) * idx
            if t1 > t2:
                tmp = t1; t1 = t2; t2 = tmp
        else:
            if ox < b[0] or ox > b[2]:
                continue
            t1 = -INFINITY; t2 = INFINITY
        if dy != 0.0:
            t3 = (b[1] - oy) * idy
            t4 = (b[3] - oy) * idy
            if t3 > t4:
                tmp = t3; t3 = t4; t4 = tmp
        else:
            if oy < b[1] or oy > b[3]:
                continue
            t3 = -INFINITY; t4 = INFINITY
        tn = t1 if t1 > t3 else t3
        tf = t2 if t2 < t4 else t4
        if tf < tn or tf <= t_eps or tn > r.best_t + t_eps:
            continue
        left = S.nodes[4 * ni]
        if left >= 0:
            if sp + 2 > STACK:
                r.degenerate = 1
                return r
            stack[sp] = S.nodes[4 * ni + 1]
            stack[sp + 1] = left
            sp += 2
            continue
        for k in range(S.nodes[4 * ni + 2], S.nodes[4 * ni + 2] + S.nodes[4 * ni + 3]):
            pid = S.order[k]
            if pid < S.na:
                A = S.arcs + 12 * pid
                px = ox - A[0]
                py = oy - A[1]
                lox = (px * A[2] + py * A[3]) / A[4]
                loy = (-px * A[3] + py * A[2]) / A[5]
                ldx = (dx * A[2] + dy * A[3]) / A[4]
                ldy = (-dx * A[3] + dy * A[2]) / A[5]
                qa = ldx * ldx + ldy * ldy
                qb = lox * ldx + loy * ldy
                qc = lox * lox + loy * loy - 1.0
                disc = qb * qb - qa * qc
                if disc < 0.0:
                    if disc < -TANGENT_TOL * qb * qb:
                        continue
                    disc = 0.0  # tangent within rounding: double root, reported as grazing
                q = -(qb + copysign(sqrt(disc), qb))
                r0 = q / qa
                r1 = qc / q if q != 0.0 else r0
                for which in range(2):
                    t = r0 if which == 0 else r1
                    if t <= t_eps or t >= r.best_t + t_eps:
                        continue
                    hx = ox + t * dx - A[6]
                    hy = oy + t * dy - A[7]
                    if A[8] * hy - A[9] * hx < 0.0 or hx * A[11] - hy * A[10] < 0.0:
                        continue
                    _consider(&r, t, pid)
                    if r1 == r0:
                        break
            else:
                A = S.segs + 4 * (pid - S.na)
                x0 = A[0]; y0 = A[1]
                ex = A[2] - x0
                ey = A[3] - y0
                den = dx * ey - dy * ex
                wx = x0 - ox
                wy = y0 - oy
                if den == 0.0:
                    if wx * dy - wy * dx == 0.0:
                        r.degenerate = 1
                    continue
                t = (wx * ey - wy * ex) / den
                s = (wx * dy - wy * dx) / den
                if t <= t_eps or t >= r.best_t + t_eps or s <= 0.0 or s >= 1.0:
                    continue
                _consider(&r, t, pid)
    if S.fy == S.fy and dy < 0.0:
        t = (S.fy - oy) / dy
        if t > t_eps and t < r.best_t + t_eps:
            hx = ox + t * dx
            if S.fx0 < hx < S.fx1:
                _consider(&r, t, -2)
    return r


cdef void _normal(const Scene* S, long long pid, double hx, double hy,
                  double* nx, double* ny) noexcept nogil:
    cdef const double* A
    cdef double px, py, xl, yl, gx, gy, n
    if pid == -2:
        nx[0] = 0.0
        ny[0] = 1.0
        return
    if pid < S.na:
        A = S.arcs + 12 * pid
        px = hx - A[0]
        py = hy - A[1]
        xl = px * A[2] + py * A[3]
        yl = -px * A[3] + py * A[2]
        gx = xl / (A[4] * A[4])
        gy = yl / (A[5] * A[5])
        nx[0] = gx * A[2] - gy * A[3]
        ny[0] = gx * A[3] + gy * A[2]
    else:
        A = S.segs + 4 * (pid - S.na)
        nx[0] = -(A[3] - A[1])
        ny[0] = A[2] - A[0]
    n = sqrt(nx[0] * nx[0] + ny[0] * ny[0])
    nx[0] /= n
    ny[0] /= n


cdef inline double _refine(const Scene* S, long long pid, double ox, double oy, double dx, double dy,
                           double t, double t_eps) noexcept nogil:
    """One Newton step on the conic along the ray; undoes cancellation in the quadratic."""
    cdef const double* A = S.arcs + 12 * pid
    cdef double px = ox + t * dx - A[0]
    cdef double py = oy + t * dy - A[1]
    cdef double u = (px * A[2] + py * A[3]) / A[4]
    cdef double v = (-px * A[3] + py * A[2]) / A[5]
    cdef double g = 2.0 * (u * (dx * A[2] + dy * A[3]) / A[4] + v * (-dx * A[3] + dy * A[2]) / A[5])
    cdef double step
    if g != 0.0:
        step = (u * u + v * v - 1.0) / g
        if fabs(step) < t_eps:
            t -= step
    return t


cdef int _trace_one(const Scene* S, double x, double alpha, long long max_bounces, double t_eps,
                    double* y_out, double* b_out, long long* nb_out, long long* h0, long long* h1,
                    double* path, long long* hits, long long cap) noexcept nogil:
    """Trace one ray; ``path``/``hits`` (capacity ``cap``) may be NULL."""
    cdef double ox = x, oy = 0.0
    cdef double dx = cos(alpha), dy = sin(alpha)
    cdef long long nb = 0
    cdef double t_max, hx, hy, nx, ny, dn, norm
    cdef Near r
    h0[0] = -1
    h1[0] = -1
    y_out[0] = NAN
    b_out[0] = NAN
    while True:
        nb_out[0] = nb
        t_max = -oy / dy if dy > 0.0 else INFINITY
        r = _nearest(S, ox, oy, dx, dy, t_eps, t_max)
        if r.degenerate:
            return LOST
        if r.best_id == -1:
            if dy > 0.0:
                y_out[0] = ox + t_max * dx
                b_out[0] = atan2(dy, dx) - M_PI
                return RETURNED
            return LOST
        if r.second_t - r.best_t < t_eps:
            return LOST
        if nb >= max_bounces:
            return MAX_BOUNCES
        if 0 <= r.best_id < S.na:
            r.best_t = _refine(S, r.best_id, ox, oy, dx, dy, r.best_t, t_eps)
        hx = ox + r.best_t * dx
        hy = oy + r.best_t * dy
        _normal(S, r.best_id, hx, hy, &nx, &ny)
        dn = dx * nx + dy * ny
        if fabs(dn) < GRAZE_TOL:
            return LOST
        dx = dx - 2.0 * dn * nx
        dy = dy - 2.0 * dn * ny
        norm = sqrt(dx * dx + dy * dy)
        dx = dx / norm
        dy = dy / norm
        ox = hx
        oy = hy
        if nb == 0:
            h0[0] = r.best_id
        elif nb == 1:
            h1[0] = r.best_id
        if path != NULL and nb < cap:
            path[2 * nb] = hx
            path[2 * nb + 1] = hy
            hits[nb] = r.best_id
        nb += 1


cdef Scene _scene(c, cnp.ndarray arcs, cnp.ndarray segs, cnp.ndarray boxes,
                  cnp.ndarray nodes, cnp.ndarray order):
    cdef Scene S
    S.arcs = <const double*> cnp.PyArray_DATA(arcs)
    S.segs = <const double*> cnp.PyArray_DATA(segs)
    S.boxes = <const double*> cnp.PyArray_DATA(boxes)
    S.nodes = <const long long*> cnp.PyArray_DATA(nodes)
    S.order = <const long long*> cnp.PyArray_DATA(order)
    S.na = arcs.shape[0]
    S.nn = nodes.shape[0]
    S.fy = float(c.floor[0])
    S.fx0 = float(c.floor[1])
    S.fx1 = float(c.floor[2])
    return S


def _arrays(c):
    return (np.ascontiguousarray(c.arcs, dtype=np.float64),
            np.ascontiguousarray(c.segs, dtype=np.float64),
            np.ascontiguousarray(c.boxes, dtype=np.float64),
            np.ascontiguousarray(c.nodes, dtype=np.int64),
            np.ascontiguousarray(c.order, dtype=np.int64))


def trace_batch(c, xs, alphas, long long max_bounces, double t_eps):
    arcs, segs, boxes, nodes, order = _arrays(c)
    cdef Scene S = _scene(c, arcs, segs, boxes, nodes, order)
    cdef const double[::1] X = np.ascontiguousarray(xs, dtype=np.float64)
    cdef const double[::1] AL = np.ascontiguousarray(alphas, dtype=np.float64)
    cdef Py_ssize_t n = X.shape[0], i
    status = np.empty(n, dtype=np.int8)
    ys = np.empty(n)
    betas = np.empty(n)
    bounces = np.empty(n, dtype=np.int32)
    first = np.empty(n, dtype=np.int32)
    second = np.empty(n, dtype=np.int32)
    cdef signed char[::1] st = status
    cdef double[::1] Y = ys
    cdef double[::1] B = betas
    cdef int[::1] NB = bounces
    cdef int[::1] F = first
    cdef int[::1] G = second
    cdef double y, b
    cdef long long nb, h0, h1
    with nogil:
        for i in range(n):
            st[i] = _trace_one(&S, X[i], AL[i], max_bounces, t_eps, &y, &b, &nb, &h0, &h1,
                               NULL, NULL, 0)
            Y[i] = y
            B[i] = b
            NB[i] = <int> nb
            F[i] = <int> h0
            G[i] = <int> h1
    return status, ys, betas, bounces, first, second


def trace_path(c, double x, double alpha, long long max_bounces, double t_eps):
    arcs, segs, boxes, nodes, order = _arrays(c)
    cdef Scene S = _scene(c, arcs, segs, boxes, nodes, order)
    cdef long long cap = min(max_bounces, 100000)
    path_arr = np.empty(2 * cap + 2)
    hits_arr = np.empty(cap + 1, dtype=np.int64)
    cdef double[::1] P = path_arr
    cdef long long[::1] H = hits_arr
    cdef double y, b
    cdef long long nb, h0, h1
    cdef int st = _trace_one(&S, x, alpha, max_bounces, t_eps, &y, &b, &nb, &h0, &h1,
                             &P[0], &H[0], cap)
    k = min(nb, cap)
    pts = [(x, 0.0)] + [(path_arr[2 * j], path_arr[2 * j + 1]) for j in range(k)]
    if st == RETURNED:
        pts.append((y, 0.0))
    return (st, y, b, nb, h0, h1), pts, [int(h) for h in hits_arr[:k]]
