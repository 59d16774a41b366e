"""Ray casting against a mesh, brute force or through the voxel grid.

The grid path walks the voxels pierced by the ray (3D DDA) and tests the
faces stored there with the same kernel the brute-force path uses.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

from .grid import VoxelGrid
from .kernels import ray_face
from .mesh import TriMesh

# fixed, deliberately non axis-aligned directions used for parity tests
PARITY_DIRECTION = np.array([1.0, 0.7548776662466927, 0.5698402909980532])
PARITY_DIRECTION /= np.linalg.norm(PARITY_DIRECTION)
TIEBREAK_AXIS = np.array([-0.6, 0.2, 0.7745966692414834])
TIEBREAK_AXIS /= np.linalg.norm(TIEBREAK_AXIS)
MAX_RETRIES = 3


@njit(cache=True)
def _slab(o, d, lo, hi):
    t0 = 0.0
    t1 = np.inf
    for ax in range(3):
        if d[ax] != 0.0:
            inv = 1.0 / d[ax]
            a = (lo[ax] - o[ax]) * inv
            b = (hi[ax] - o[ax]) * inv
            if a > b:
                a, b = b, a
            t0 = max(t0, a)
            t1 = min(t1, b)
        elif o[ax] < lo[ax] or o[ax] > hi[ax]:
            return 1.0, 0.0
    return t0, t1


@njit(cache=True)
def _grid_candidates(o, d, origin, cell, dims, cstart, cfaces):
    """Face ids stored in voxels the ray passes through (with repeats)."""
    hi = np.empty(3)
    for ax in range(3):
        hi[ax] = origin[ax] + dims[ax] * cell
    t0, t1 = _slab(o, d, origin, hi)
    out = np.empty(64, np.int64)
    n = 0
    if t0 > t1:
        return out[:0]
    ijk = np.empty(3, np.int64)
    step = np.empty(3, np.int64)
    tmax = np.empty(3)
    tdel = np.empty(3)
    for ax in range(3):
        p = o[ax] + t0 * d[ax]
        v = int(math.floor((p - origin[ax]) / cell))
        ijk[ax] = min(max(v, 0), dims[ax] - 1)
        if d[ax] > 0:
            step[ax] = 1
            tmax[ax] = (origin[ax] + (ijk[ax] + 1) * cell - o[ax]) / d[ax]
            tdel[ax] = cell / d[ax]
        elif d[ax] < 0:
            step[ax] = -1
            tmax[ax] = (origin[ax] + ijk[ax] * cell - o[ax]) / d[ax]
            tdel[ax] = -cell / d[ax]
        else:
            step[ax] = 0
            tmax[ax] = np.inf
            tdel[ax] = np.inf
    while True:
        c = (ijk[0] * dims[1] + ijk[1]) * dims[2] + ijk[2]
        for m in range(cstart[c], cstart[c + 1]):
            if n == out.shape[0]:
                grown = np.empty(2 * n, np.int64)
                grown[:n] = out
                out = grown
            out[n] = cfaces[m]
            n += 1
        ax = 0
        if tmax[1] < tmax[ax]:
            ax = 1
        if tmax[2] < tmax[ax]:
            ax = 2
        if tmax[ax] > t1:
            break
        ijk[ax] += step[ax]
        if ijk[ax] < 0 or ijk[ax] >= dims[ax]:
            break
        tmax[ax] += tdel[ax]
    return out[:n]


@njit(cache=True)
def _cast(o, d, V, F, cand):
    """All hits of the ray with faces in ``cand``; sorted by (t, face), unique faces."""
    k = cand.shape[0]
    ts = np.empty(k)
    fs = np.empty(k, np.int64)
    bs = np.empty((k, 3))
    deg = False
    n = 0
    cand = np.unique(cand) if k else cand
    for f in cand:
        hit, t, c0, c1, c2, dg = ray_face(o[0], o[1], o[2], d[0], d[1], d[2],
                                          V, F[f, 0], F[f, 1], F[f, 2])
        if dg:
            deg = True
        if hit:
            ts[n] = t
            fs[n] = f
            bs[n, 0] = c0
            bs[n, 1] = c1
            bs[n, 2] = c2
            n += 1
    order = np.argsort(ts[:n], kind="mergesort")  # cand ascending -> ties stay by face id
    return ts[:n][order], fs[:n][order], bs[:n][order], deg


@njit(cache=True)
def _cast_one(o, d, V, F, use_grid, origin, cell, dims, cstart, cfaces):
    if use_grid:
        cand = _grid_candidates(o, d, origin, cell, dims, cstart, cfaces)
    else:
        cand = np.arange(F.shape[0])
    return _cast(o, d, V, F, cand)


@njit(cache=True, parallel=True)
def _parity_batch(P, d, V, F, use_grid, origin, cell, dims, cstart, cfaces, nudge, out, retries):
    for q in prange(P.shape[0]):
        o = P[q].copy()
        cnt = 0
        tries = 0
        for attempt in range(4):
            ts, fs, bs, deg = _cast_one(o, d, V, F, use_grid, origin, cell, dims, cstart, cfaces)
            cnt = ts.shape[0]
            tries = attempt
            if not deg:
                break
            o = P[q] + (attempt + 1) * nudge
        out[q] = cnt & 1
        retries[q] = tries


def _grid_args(grid: VoxelGrid | None):
    if grid is None:
        z = np.zeros(1, np.int64)
        return False, np.zeros(3), 1.0, np.ones(3, np.int64), z, z
    return (True, grid.origin, grid.cell_size, np.asarray(grid.dims, np.int64),
            grid.cell_start, grid.cell_faces)


def intersect_ray(mesh: TriMesh, grid: VoxelGrid | None, origin, direction):
    """All intersections with ``t > 0`` as a list of ``(t, face_id, barycentric)``.

    Sorted by ``t`` (then face id). ``grid=None`` tests every face. A
    crossing through a shared edge or vertex is reported once, by the
    lowest-indexed face touching it.
    """
    d = np.asarray(direction, dtype=np.float64)
    if abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    o = np.asarray(origin, dtype=np.float64)
    ts, fs, bs, _ = _cast_one(o, d, mesh.vertices, mesh.faces, *_grid_args(grid))
    hits = []
    for t, f, b in zip(ts, fs, bs):
        on_edge = b.min() <= 1e-12
        if (hits and on_edge and hits[-1][2].min() <= 1e-12
                and abs(t - hits[-1][0]) <= 1e-12 * (1.0 + abs(t))):
            continue
        hits.append((float(t), int(f), b))
    return hits


def first_hits(mesh: TriMesh, grid: VoxelGrid | None, origins, directions):
    """Nearest hit distance per ray (``inf`` on miss)."""
    O = np.ascontiguousarray(np.asarray(origins, np.float64).reshape(-1, 3))
    D = np.ascontiguousarray(np.asarray(directions, np.float64).reshape(-1, 3))
    O, D = np.broadcast_arrays(O, D)
    out = np.full(len(O), np.inf)
    _first_batch(np.ascontiguousarray(O), np.ascontiguousarray(D), mesh.vertices, mesh.faces,
                 *_grid_args(grid), out)
    return out


@njit(cache=True, parallel=True)
def _first_batch(O, D, V, F, use_grid, origin, cell, dims, cstart, cfaces, out):
    for q in prange(O.shape[0]):
        ts, fs, bs, deg = _cast_one(O[q], D[q], V, F, use_grid, origin, cell, dims, cstart, cfaces)
        if ts.shape[0]:
            out[q] = ts[0]


def crossing_parity(mesh: TriMesh, grid: VoxelGrid | None, points, return_retries: bool = False):
    """Odd/even count of surface crossings along a fixed ray from each point.

    When a hit lands on an edge or vertex, or the ray grazes a face, the
    origin is shifted by ``k * 1e-9 * bbox diagonal`` along a fixed axis and
    the ray is re-cast, at most three times.
    """
    P = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
    out = np.empty(len(P), np.int64)
    retries = np.empty(len(P), np.int64)
    nudge = TIEBREAK_AXIS * (1e-9 * mesh.diagonal())
    _parity_batch(P, PARITY_DIRECTION, mesh.vertices, mesh.faces, *_grid_args(grid), nudge,
                  out, retries)
    return (out, retries) if return_retries else out
