"""Scalar triangle kernels compiled with numba.

Every query path in the package (brute force, grid accelerated, batch or
single point) goes through these functions, so two paths that visit the
same face compute bit-identical results for it.
"""
import math

from numba import njit


@njit(cache=True, inline="always")
def _dot(a0, a1, a2, b0, b1, b2):
    return a0 * b0 + a1 * b1 + a2 * b2


@njit(cache=True)
def closest_on_face(px, py, pz, V, f0, f1, f2):
    """Closest point of a triangle to ``p`` by Voronoi-region classification.

    Returns ``(d2, c0, c1, c2, nact)``: squared distance, barycentric weights
    and the number of active non-negativity constraints (0 interior,
    1 edge, 2 vertex).
    """
    ax, ay, az = V[f0, 0], V[f0, 1], V[f0, 2]
    bx, by, bz = V[f1, 0], V[f1, 1], V[f1, 2]
    cx, cy, cz = V[f2, 0], V[f2, 1], V[f2, 2]
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = px - ax, py - ay, pz - az

    c0 = 0.0
    c1 = 0.0
    c2 = 0.0
    nact = 0
    d1 = _dot(abx, aby, abz, apx, apy, apz)
    d2 = _dot(acx, acy, acz, apx, apy, apz)
    if d1 <= 0.0 and d2 <= 0.0:
        c0 = 1.0
        nact = 2
    else:
        bpx, bpy, bpz = px - bx, py - by, pz - bz
        d3 = _dot(abx, aby, abz, bpx, bpy, bpz)
        d4 = _dot(acx, acy, acz, bpx, bpy, bpz)
        vc = d1 * d4 - d3 * d2
        if d3 >= 0.0 and d4 <= d3:
            c1 = 1.0
            nact = 2
        elif vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
            v = d1 / (d1 - d3)
            c0 = 1.0 - v
            c1 = v
            nact = 1
        else:
            cpx, cpy, cpz = px - cx, py - cy, pz - cz
            d5 = _dot(abx, aby, abz, cpx, cpy, cpz)
            d6 = _dot(acx, acy, acz, cpx, cpy, cpz)
            vb = d5 * d2 - d1 * d6
            va = d3 * d6 - d5 * d4
            if d6 >= 0.0 and d5 <= d6:
                c2 = 1.0
                nact = 2
            elif vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
                w = d2 / (d2 - d6)
                c0 = 1.0 - w
                c2 = w
                nact = 1
            elif va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
                w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
                c1 = 1.0 - w
                c2 = w
                nact = 1
            else:
                denom = 1.0 / (va + vb + vc)
                c1 = vb * denom
                c2 = vc * denom
                c0 = 1.0 - c1 - c2
    qx = c0 * ax + c1 * bx + c2 * cx
    qy = c0 * ay + c1 * by + c2 * cy
    qz = c0 * az + c1 * bz + c2 * cz
    dx, dy, dz = px - qx, py - qy, pz - qz
    return dx * dx + dy * dy + dz * dz, c0, c1, c2, nact


@njit(cache=True)
def ray_face(ox, oy, oz, dx, dy, dz, V, f0, f1, f2):
    """Moller-Trumbore ray/triangle test without culling.

    Returns ``(hit, t, c0, c1, c2, degenerate)``. ``degenerate`` flags hits
    that land on an edge or vertex, or rays (nearly) parallel to the face:
    parity counting is unreliable for those.
    """
    ax, ay, az = V[f0, 0], V[f0, 1], V[f0, 2]
    e1x, e1y, e1z = V[f1, 0] - ax, V[f1, 1] - ay, V[f1, 2] - az
    e2x, e2y, e2z = V[f2, 0] - ax, V[f2, 1] - ay, V[f2, 2] - az
    qx = dy * e2z - dz * e2y
    qy = dz * e2x - dx * e2z
    qz = dx * e2y - dy * e2x
    det = _dot(e1x, e1y, e1z, qx, qy, qz)
    # |e1 x e2| scales det; relative test keeps the flag scale free
    nx = e1y * e2z - e1z * e2y
    ny = e1z * e2x - e1x * e2z
    nz = e1x * e2y - e1y * e2x
    nn = math.sqrt(nx * nx + ny * ny + nz * nz)
    if abs(det) <= 1e-12 * nn:
        # parallel ray: the only possible contact is along the face plane
        sx, sy, sz = ox - ax, oy - ay, oz - az
        coplanar = abs(_dot(sx, sy, sz, nx, ny, nz)) <= 1e-12 * nn * (
            1.0 + math.sqrt(_dot(sx, sy, sz, sx, sy, sz)))
        return False, 0.0, 0.0, 0.0, 0.0, coplanar
    inv = 1.0 / det
    sx, sy, sz = ox - ax, oy - ay, oz - az
    u = _dot(sx, sy, sz, qx, qy, qz) * inv
    rx = sy * e1z - sz * e1y
    ry = sz * e1x - sx * e1z
    rz = sx * e1y - sy * e1x
    v = _dot(dx, dy, dz, rx, ry, rz) * inv
    t = _dot(e2x, e2y, e2z, rx, ry, rz) * inv
    w = 1.0 - u - v
    if u < 0.0 or v < 0.0 or w < 0.0 or t <= 0.0:
        return False, t, w, u, v, False
    eps = 1e-12
    degenerate = u <= eps or v <= eps or w <= eps or abs(det) <= 1e-9 * nn
    return True, t, w, u, v, degenerate


@njit(cache=True)
def _axis_test(ax_, ay_, az_, v0x, v0y, v0z, v1x, v1y, v1z, v2x, v2y, v2z, hx, hy, hz):
    p0 = ax_ * v0x + ay_ * v0y + az_ * v0z
    p1 = ax_ * v1x + ay_ * v1y + az_ * v1z
    p2 = ax_ * v2x + ay_ * v2y + az_ * v2z
    r = hx * abs(ax_) + hy * abs(ay_) + hz * abs(az_)
    lo = min(p0, min(p1, p2))
    hi = max(p0, max(p1, p2))
    return lo > r or hi < -r


@njit(cache=True)
def _edge_axes(ex, ey, ez, v0x, v0y, v0z, v1x, v1y, v1z, v2x, v2y, v2z, hx, hy, hz):
    return (_axis_test(0.0, -ez, ey, v0x, v0y, v0z, v1x, v1y, v1z, v2x, v2y, v2z, hx, hy, hz)
            or _axis_test(ez, 0.0, -ex, v0x, v0y, v0z, v1x, v1y, v1z, v2x, v2y, v2z, hx, hy, hz)
            or _axis_test(-ey, ex, 0.0, v0x, v0y, v0z, v1x, v1y, v1z, v2x, v2y, v2z, hx, hy, hz))


@njit(cache=True)
def tri_box_overlap(cx, cy, cz, hx, hy, hz, V, f0, f1, f2):
    """Separating-axis test (13 axes) between a triangle and an AABB."""
    v0x, v0y, v0z = V[f0, 0] - cx, V[f0, 1] - cy, V[f0, 2] - cz
    v1x, v1y, v1z = V[f1, 0] - cx, V[f1, 1] - cy, V[f1, 2] - cz
    v2x, v2y, v2z = V[f2, 0] - cx, V[f2, 1] - cy, V[f2, 2] - cz
    # box face normals
    if min(v0x, min(v1x, v2x)) > hx or max(v0x, max(v1x, v2x)) < -hx:
        return False
    if min(v0y, min(v1y, v2y)) > hy or max(v0y, max(v1y, v2y)) < -hy:
        return False
    if min(v0z, min(v1z, v2z)) > hz or max(v0z, max(v1z, v2z)) < -hz:
        return False
    e0x, e0y, e0z = v1x - v0x, v1y - v0y, v1z - v0z
    e1x, e1y, e1z = v2x - v1x, v2y - v1y, v2z - v1z
    e2x, e2y, e2z = v0x - v2x, v0y - v2y, v0z - v2z
    # edge x box-axis cross products
    if (_edge_axes(e0x, e0y, e0z, v0x, v0y, v0z, v1x, v1y, v1z, v2x, v2y, v2z, hx, hy, hz)
            or _edge_axes(e1x, e1y, e1z, v0x, v0y, v0z, v1x, v1y, v1z, v2x, v2y, v2z, hx, hy, hz)
            or _edge_axes(e2x, e2y, e2z, v0x, v0y, v0z, v1x, v1y, v1z, v2x, v2y, v2z, hx, hy, hz)):
        return False
    # triangle plane
    nx = e0y * e1z - e0z * e1y
    ny = e0z * e1x - e0x * e1z
    nz = e0x * e1y - e0y * e1x
    d = nx * v0x + ny * v0y + nz * v0z
    r = hx * abs(nx) + hy * abs(ny) + hz * abs(nz)
    return abs(d) <= r
