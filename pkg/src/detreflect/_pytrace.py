"""Pure-Python ray tracing kernel (fallback for the compiled ``_ctrace``).

Both kernels operate on the flat arrays of a compiled scene and must stay in
step: same arithmetic, same order of operations.
"""
import math

import numpy as np

RETURNED, MAX_BOUNCES, LOST = 0, 1, 2
GRAZE_TOL = 1e-12
TANGENT_TOL = 1e-15
INF = math.inf


class _Walker:
    """Nearest-hit search over the BVH for one scene."""

    def __init__(self, arcs, segs, boxes, nodes, order, floor):
        self.arcs = arcs.tolist()
        self.segs = segs.tolist()
        self.boxes = boxes.tolist()
        self.nodes = nodes.tolist()
        self.order = order.tolist()
        self.na = len(self.arcs)
        self.floor = [float(v) for v in floor]

    def nearest(self, ox, oy, dx, dy, t_eps, t_max):
        """Return (best_t, best_id, second_t, degenerate)."""
        best_t, best_id, second_t = t_max, -1, INF
        degenerate = False
        idx = 1.0 / dx if dx != 0.0 else INF
        idy = 1.0 / dy if dy != 0.0 else INF
        stack = [0] if self.nodes else []
        boxes, nodes, order, arcs, segs, na = self.boxes, self.nodes, self.order, self.arcs, self.segs, self.na
        while stack:
            ni = stack.pop()
            bx0, by0, bx1, by1 = boxes[ni]
            # slab test
            if dx != 0.0:
                t1 = (bx0 - ox) * idx
                t2 = (bx1 - ox) * idx
                if t1 > t2:
                    t1, t2 = t2, t1
            else:
                if ox < bx0 or ox > bx1:
                    continue
                t1, t2 = -INF, INF
            if dy != 0.0:
                t3 = (by0 - oy) * idy
                t4 = (by1 - oy) * idy
                if t3 > t4:
                    t3, t4 = t4, t3
            else:
                if oy < by0 or oy > by1:
                    continue
                t3, t4 = -INF, INF
            tn = t1 if t1 > t3 else t3
            tf = t2 if t2 < t4 else t4
            if tf < tn or tf <= t_eps or tn > best_t + t_eps:
                continue
            left, right, start, count = nodes[ni]
            if left >= 0:
                stack.append(right)
                stack.append(left)
                continue
            for k in range(start, start + count):
                pid = order[k]
                if pid < na:
                    cx, cy, ux, uy, a, b, apx, apy, e1x, e1y, e2x, e2y = arcs[pid]
                    px, py = ox - cx, oy - cy
                    lox = (px * ux + py * uy) / a
                    loy = (-px * uy + py * ux) / b
                    ldx = (dx * ux + dy * uy) / a
                    ldy = (-dx * uy + dy * ux) / b
                    qa = ldx * ldx + ldy * ldy
                    qb = lox * ldx + loy * ldy
                    qc = lox * lox + loy * loy - 1.0
                    disc = qb * qb - qa * qc
                    if disc < 0.0:
                        if disc < -TANGENT_TOL * qb * qb:
                            continue
                        disc = 0.0  # tangent within rounding: double root, reported as grazing
                    q = -(qb + math.copysign(math.sqrt(disc), qb))
                    r0 = q / qa
                    r1 = qc / q if q != 0.0 else r0
                    for t in (r0, r1):
                        if t <= t_eps or t >= best_t + t_eps:
                            continue
                        hx = ox + t * dx - apx
                        hy = oy + t * dy - apy
                        if e1x * hy - e1y * hx < 0.0 or hx * e2y - hy * e2x < 0.0:
                            continue
                        if t < best_t:
                            second_t = best_t
                            best_t, best_id = t, pid
                        elif t < second_t:
                            second_t = t
                        if r1 == r0:
                            break
                else:
                    x0, y0, x1, y1 = segs[pid - na]
                    ex, ey = x1 - x0, y1 - y0
                    den = dx * ey - dy * ex
                    wx, wy = x0 - ox, y0 - oy
                    if den == 0.0:
                        if wx * dy - wy * dx == 0.0:
                            degenerate = True
                        continue
                    t = (wx * ey - wy * ex) / den
                    s = (wx * dy - wy * dx) / den
                    if t <= t_eps or t >= best_t + t_eps or s <= 0.0 or s >= 1.0:
                        continue
                    if t < best_t:
                        second_t = best_t
                        best_t, best_id = t, pid
                    elif t < second_t:
                        second_t = t
        fy, fx0, fx1 = self.floor
        if fy == fy and dy < 0.0:
            t = (fy - oy) / dy
            if t > t_eps and t < best_t + t_eps:
                hx = ox + t * dx
                if fx0 < hx < fx1:
                    if t < best_t:
                        second_t = best_t
                        best_t, best_id = t, -2
                    elif t < second_t:
                        second_t = t
        return best_t, best_id, second_t, degenerate

    def refine(self, pid, ox, oy, dx, dy, t, t_eps):
        """One Newton step on the conic along the ray; undoes cancellation in the quadratic."""
        cx, cy, ux, uy, a, b = self.arcs[pid][:6]
        px, py = ox + t * dx - cx, oy + t * dy - cy
        u = (px * ux + py * uy) / a
        v = (-px * uy + py * ux) / b
        g = 2.0 * (u * (dx * ux + dy * uy) / a + v * (-dx * uy + dy * ux) / b)
        if g != 0.0:
            step = (u * u + v * v - 1.0) / g
            if abs(step) < t_eps:
                t -= step
        return t

    def normal(self, pid, hx, hy):
        if pid == -2:
            return 0.0, 1.0
        if pid < self.na:
            cx, cy, ux, uy, a, b = self.arcs[pid][:6]
            px, py = hx - cx, hy - cy
            xl = px * ux + py * uy
            yl = -px * uy + py * ux
            gx, gy = xl / (a * a), yl / (b * b)
            nx, ny = gx * ux - gy * uy, gx * uy + gy * ux
        else:
            x0, y0, x1, y1 = self.segs[pid - self.na]
            nx, ny = -(y1 - y0), x1 - x0
        n = math.sqrt(nx * nx + ny * ny)
        return nx / n, ny / n

    def trace(self, x, alpha, max_bounces, t_eps, path=None):
        ox, oy = x, 0.0
        dx, dy = math.cos(alpha), math.sin(alpha)
        nb = 0
        h0 = h1 = -1
        while True:
            t_max = -oy / dy if dy > 0.0 else INF
            best_t, best_id, second_t, degen = self.nearest(ox, oy, dx, dy, t_eps, t_max)
            if degen:
                return LOST, math.nan, math.nan, nb, h0, h1
            if best_id == -1:
                if dy > 0.0:
                    y = ox + t_max * dx
                    if path is not None:
                        path.append((y, 0.0))
                    return RETURNED, y, math.atan2(dy, dx) - math.pi, nb, h0, h1
                return LOST, math.nan, math.nan, nb, h0, h1
            if second_t - best_t < t_eps:
                return LOST, math.nan, math.nan, nb, h0, h1
            if nb >= max_bounces:
                return MAX_BOUNCES, math.nan, math.nan, nb, h0, h1
            if 0 <= best_id < self.na:
                best_t = self.refine(best_id, ox, oy, dx, dy, best_t, t_eps)
            hx, hy = ox + best_t * dx, oy + best_t * dy
            nx, ny = self.normal(best_id, hx, hy)
            dn = dx * nx + dy * ny
            if abs(dn) < GRAZE_TOL:
                return LOST, math.nan, math.nan, nb, h0, h1
            dx, dy = dx - 2.0 * dn * nx, dy - 2.0 * dn * ny
            norm = math.sqrt(dx * dx + dy * dy)
            dx, dy = dx / norm, dy / norm
            ox, oy = hx, hy
            if nb == 0:
                h0 = best_id
            elif nb == 1:
                h1 = best_id
            nb += 1
            if path is not None:
                path.append((hx, hy))
                path.append(best_id)


def _walker(scene):
    w = getattr(scene, "_py_walker", None)
    if w is None:
        w = _Walker(scene.arcs, scene.segs, scene.boxes, scene.nodes, scene.order, scene.floor)
        scene._py_walker = w
    return w


def trace_batch(scene, xs, alphas, max_bounces, t_eps):
    w = _walker(scene)
    n = len(xs)
    status = np.empty(n, dtype=np.int8)
    ys = np.empty(n)
    betas = np.empty(n)
    bounces = np.empty(n, dtype=np.int32)
    h0 = np.empty(n, dtype=np.int32)
    h1 = np.empty(n, dtype=np.int32)
    for i in range(n):
        status[i], ys[i], betas[i], bounces[i], h0[i], h1[i] = w.trace(
            float(xs[i]), float(alphas[i]), max_bounces, t_eps)
    return status, ys, betas, bounces, h0, h1


def trace_path(scene, x, alpha, max_bounces, t_eps):
    w = _walker(scene)
    raw = [(float(x), 0.0)]
    res = w.trace(float(x), float(alpha), max_bounces, t_eps, raw)
    pts = [p for p in raw if isinstance(p, tuple)]
    hits = [p for p in raw if not isinstance(p, tuple)]
    return res, pts, hits
