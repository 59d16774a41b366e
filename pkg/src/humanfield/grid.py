"""Uniform voxel grid over a triangle mesh and exact closest-point search.

Faces are binned into every voxel their triangle overlaps (separating-axis
test against a slightly inflated box, so binning is conservative). The
closest-point search first visits voxels near the query's voxel in order
of their box-to-box distance and stops once the distance found so far is
strictly below the lower bound of every voxel not yet visited. Queries
not settled there sweep coarse blocks of occupied voxels, skipping any
block or voxel whose box is farther than the best distance so far. Both
phases keep the result identical to a brute-force scan over all faces,
including the lowest-face-index tie rule.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, NamedTuple

import numpy as np
from numba import njit, prange

from .kernels import closest_on_face, tri_box_overlap
from .mesh import MeshError, TriMesh

DEFAULT_RESOLUTION = 64
# box inflation used while binning, relative to cell size
BIN_PAD = 1e-7
# gap radius (cells) of the precomputed nearest-first visiting order
TABLE_RADIUS = 4
# edge length (cells) of the coarse blocks used beyond that radius
BLOCK = 8


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    origin: np.ndarray
    cell_size: float
    dims: tuple
    cell_start: np.ndarray  # CSR offsets, len = prod(dims) + 1
    cell_faces: np.ndarray  # face ids, ascending within each cell
    n_faces: int

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.dims))

    def flat(self, ijk) -> int:
        i, j, k = ijk
        return (int(i) * self.dims[1] + int(j)) * self.dims[2] + int(k)

    def unflat(self, idx: int) -> tuple:
        k = idx % self.dims[2]
        j = (idx // self.dims[2]) % self.dims[1]
        return (idx // (self.dims[1] * self.dims[2]), j, k)

    def faces_in(self, ijk) -> np.ndarray:
        c = self.flat(ijk)
        return self.cell_faces[self.cell_start[c]:self.cell_start[c + 1]]

    def voxel_of(self, points) -> np.ndarray:
        """Integer voxel coordinates ``floor((p - origin) / cell)``; may lie outside the grid."""
        p = np.asarray(points, dtype=np.float64)
        return np.floor((p - self.origin) / self.cell_size).astype(np.int64)

    def cell_box(self, ijk):
        lo = self.origin + np.asarray(ijk, dtype=np.float64) * self.cell_size
        return lo, lo + self.cell_size

    def bounds(self):
        return self.origin, self.origin + np.asarray(self.dims) * self.cell_size

    def occupied(self) -> np.ndarray:
        return np.nonzero(np.diff(self.cell_start) > 0)[0]

    def blocks(self):
        """Occupied ``BLOCK``-cubed groups of voxels: ``(corner voxel per block,
        CSR offsets, occupied voxel ids)``. Built lazily and cached."""
        cached = self.__dict__.get("_blocks")
        if cached is None:
            occ = self.occupied()
            ijk = np.stack(np.unravel_index(occ, self.dims), 1)
            bd = -(-np.asarray(self.dims) // BLOCK)
            bid = np.ravel_multi_index(tuple((ijk // BLOCK).T), tuple(bd))
            order = np.argsort(bid, kind="stable")
            ub, counts = np.unique(bid[order], return_counts=True)
            corner = np.stack(np.unravel_index(ub, tuple(bd)), 1).astype(np.int64) * BLOCK
            start = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
            cached = (np.ascontiguousarray(corner), start, np.ascontiguousarray(occ[order]))
            object.__setattr__(self, "_blocks", cached)
        return cached


@njit(cache=True)
def _bin_faces(V, F, origin, cell, dims, pad, out_cell, out_face, fill):
    n = 0
    h = 0.5 * cell + pad
    for f in range(F.shape[0]):
        a, b, c = F[f, 0], F[f, 1], F[f, 2]
        lo = np.empty(3, np.int64)
        hi = np.empty(3, np.int64)
        for ax in range(3):
            mn = min(V[a, ax], min(V[b, ax], V[c, ax]))
            mx = max(V[a, ax], max(V[b, ax], V[c, ax]))
            lo[ax] = max(0, int(math.floor((mn - pad - origin[ax]) / cell)))
            hi[ax] = min(dims[ax] - 1, int(math.floor((mx + pad - origin[ax]) / cell)))
        for i in range(lo[0], hi[0] + 1):
            cx = origin[0] + (i + 0.5) * cell
            for j in range(lo[1], hi[1] + 1):
                cy = origin[1] + (j + 0.5) * cell
                for k in range(lo[2], hi[2] + 1):
                    cz = origin[2] + (k + 0.5) * cell
                    if tri_box_overlap(cx, cy, cz, h, h, h, V, a, b, c):
                        if fill:
                            out_cell[n] = (i * dims[1] + j) * dims[2] + k
                            out_face[n] = f
                        n += 1
    return n


def build_grid(mesh: TriMesh, resolution: int = DEFAULT_RESOLUTION) -> VoxelGrid:
    """Bin the mesh faces into a uniform grid.

    ``cell_size`` is the longest bounding-box extent over ``resolution``;
    one empty margin cell is added on each side of every axis.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    if mesh.n_faces == 0:
        raise MeshError("cannot build a grid over an empty mesh")
    lo, hi = mesh.bounds()
    ext = hi - lo
    longest = float(ext.max())
    if longest <= 0:
        raise MeshError("mesh has zero extent")
    cell = longest / resolution
    dims = tuple(int(d) for d in np.maximum(np.ceil(ext / cell - 1e-9), 1).astype(np.int64) + 2)
    origin = lo - cell
    dims_arr = np.array(dims, dtype=np.int64)
    V, F = mesh.vertices, mesh.faces
    pad = BIN_PAD * cell
    dummy = np.empty(0, np.int64)
    n = _bin_faces(V, F, origin, cell, dims_arr, pad, dummy, dummy, False)
    cells = np.empty(n, np.int64)
    faces = np.empty(n, np.int64)
    _bin_faces(V, F, origin, cell, dims_arr, pad, cells, faces, True)
    order = np.argsort(cells, kind="stable")  # faces stay ascending within a cell
    ncell = int(np.prod(dims))
    start = np.zeros(ncell + 1, np.int64)
    np.cumsum(np.bincount(cells, minlength=ncell), out=start[1:])
    return VoxelGrid(origin, float(cell), dims, start, faces[order], mesh.n_faces)


def get_grid(mesh: TriMesh, resolution: int = DEFAULT_RESOLUTION) -> VoxelGrid:
    """Grid for ``mesh`` memoized on the (immutable) mesh object."""
    key = ("grid", resolution)
    if key not in mesh._cache:
        mesh._cache[key] = build_grid(mesh, resolution)
    return mesh._cache[key]


def shells(grid: VoxelGrid, seed_voxel) -> Iterator[tuple]:
    """Yield ``(voxel, lower_bound)`` for every non-empty voxel.

    ``lower_bound`` is the exact box-to-box distance between the seed voxel
    and the yielded voxel, so it bounds the distance from any point of the
    seed voxel to any face stored there. Output is ordered by that bound,
    then by Manhattan distance, then by voxel index.
    """
    seed = np.asarray(seed_voxel, dtype=np.int64)
    if np.any(seed < 0) or np.any(seed >= np.asarray(grid.dims)):
        raise ValueError(f"seed voxel {tuple(seed)} outside grid {grid.dims}")
    occ = grid.occupied()
    k = occ % grid.dims[2]
    j = (occ // grid.dims[2]) % grid.dims[1]
    i = occ // (grid.dims[1] * grid.dims[2])
    delta = np.abs(np.stack([i, j, k], 1) - seed)
    gap = np.maximum(delta - 1, 0) * grid.cell_size
    lb = np.sqrt((gap ** 2).sum(1))
    manhattan = delta.sum(1)
    for n in np.lexsort((occ, manhattan, lb)):
        yield (int(i[n]), int(j[n]), int(k[n])), float(lb[n])


# ------------------------------------------------------------- closest point

class ClosestPoints(NamedTuple):
    face: np.ndarray        # (n,) int64
    barycentric: np.ndarray  # (n, 3)
    point: np.ndarray       # (n, 3)
    distance: np.ndarray    # (n,)
    active: np.ndarray      # (n,) active-set size 0/1/2


@njit(cache=True, inline="always")
def _box_d2(px, py, pz, x0, y0, z0, s):
    dx = max(x0 - px, 0.0, px - (x0 + s))
    dy = max(y0 - py, 0.0, py - (y0 + s))
    dz = max(z0 - pz, 0.0, pz - (z0 + s))
    return dx * dx + dy * dy + dz * dz


@njit(cache=True)
def _scan_cell(px, py, pz, V, F, cstart, cfaces, c, best):
    # best = [d2, face, c0, c1, c2, nact]
    for n in range(cstart[c], cstart[c + 1]):
        f = cfaces[n]
        d2, c0, c1, c2, na = closest_on_face(px, py, pz, V, F[f, 0], F[f, 1], F[f, 2])
        if d2 < best[0] or (d2 == best[0] and f < best[1]):
            best[0] = d2
            best[1] = f
            best[2] = c0
            best[3] = c1
            best[4] = c2
            best[5] = na


@lru_cache(maxsize=8)
def _offset_table(radius: int):
    """Voxel offsets whose box-to-box gap to the seed voxel is at most
    ``radius`` cells, sorted by that gap (squared, in cell units).

    Every voxel left out has a gap of at least ``radius`` cells, so a search
    may stop inside the table as soon as the current gap exceeds the best
    distance found.
    """
    r = np.arange(-radius - 1, radius + 2)
    off = np.stack(np.meshgrid(r, r, r, indexing="ij"), -1).reshape(-1, 3)
    gap = np.maximum(np.abs(off) - 1, 0)
    lb2 = (gap * gap).sum(1)
    keep = lb2 <= radius * radius
    off, lb2 = off[keep], lb2[keep]
    order = np.argsort(lb2, kind="stable")
    return np.ascontiguousarray(off[order]), np.ascontiguousarray(lb2[order].astype(np.float64))


@njit(cache=True)
def _query_grid(px, py, pz, V, F, origin, cell, dims, cstart, cfaces, best, off, lb2,
                block, blocks, bstart, bcells, cut2=np.inf):
    # only faces strictly closer than sqrt(cut2) are accepted
    best[0] = cut2
    best[1] = -1
    s = np.empty(3, np.int64)
    p = (px, py, pz)
    for ax in range(3):
        v = int(math.floor((p[ax] - origin[ax]) / cell))
        s[ax] = min(max(v, 0), dims[ax] - 1)
    # distance from p to its (clamped) seed voxel; zero when p is inside the grid
    ds = math.sqrt(_box_d2(px, py, pz, origin[0] + s[0] * cell, origin[1] + s[1] * cell,
                           origin[2] + s[2] * cell, cell))
    # phase 1: voxels near the seed, nearest first; usually decides the query
    for n in range(off.shape[0]):
        lb = math.sqrt(lb2[n]) * cell - ds
        if lb > 0.0 and lb * lb > best[0]:
            return
        i = s[0] + off[n, 0]
        j = s[1] + off[n, 1]
        k = s[2] + off[n, 2]
        if i < 0 or j < 0 or k < 0 or i >= dims[0] or j >= dims[1] or k >= dims[2]:
            continue
        c = (i * dims[1] + j) * dims[2] + k
        if cstart[c] == cstart[c + 1]:
            continue
        if _box_d2(px, py, pz, origin[0] + i * cell, origin[1] + j * cell,
                   origin[2] + k * cell, cell) > best[0]:
            continue
        _scan_cell(px, py, pz, V, F, cstart, cfaces, c, best)
    # phase 2: every occupied block whose box could still hold a closer face.
    # Visiting order does not change the result (strict/tie-aware updates).
    bs = block * cell
    if best[0] == np.inf:
        bmin = -1
        dmin = np.inf
        for b in range(blocks.shape[0]):
            d = _box_d2(px, py, pz, origin[0] + blocks[b, 0] * cell,
                        origin[1] + blocks[b, 1] * cell, origin[2] + blocks[b, 2] * cell, bs)
            if d < dmin:
                dmin = d
                bmin = b
        if bmin >= 0:
            _scan_block(px, py, pz, V, F, origin, cell, dims, cstart, cfaces, bstart, bcells, bmin,
                        best)
    for b in range(blocks.shape[0]):
        if _box_d2(px, py, pz, origin[0] + blocks[b, 0] * cell, origin[1] + blocks[b, 1] * cell,
                   origin[2] + blocks[b, 2] * cell, bs) > best[0]:
            continue
        _scan_block(px, py, pz, V, F, origin, cell, dims, cstart, cfaces, bstart, bcells, b, best)


@njit(cache=True)
def _scan_block(px, py, pz, V, F, origin, cell, dims, cstart, cfaces, bstart, bcells, b, best):
    for n in range(bstart[b], bstart[b + 1]):
        c = bcells[n]
        k = c % dims[2]
        j = (c // dims[2]) % dims[1]
        i = c // (dims[1] * dims[2])
        if _box_d2(px, py, pz, origin[0] + i * cell, origin[1] + j * cell,
                   origin[2] + k * cell, cell) > best[0]:
            continue
        _scan_cell(px, py, pz, V, F, cstart, cfaces, c, best)


@njit(cache=True, parallel=True)
def _closest_grid_batch(P, V, F, origin, cell, dims, cstart, cfaces, off, lb2, block, blocks,
                        bstart, bcells, face, bary, act, d2, cut2):
    for q in prange(P.shape[0]):
        best = np.empty(6)
        best[2] = best[3] = best[4] = best[5] = 0.0
        _query_grid(P[q, 0], P[q, 1], P[q, 2], V, F, origin, cell, dims, cstart, cfaces, best,
                    off, lb2, block, blocks, bstart, bcells, cut2)
        if best[1] < 0:
            best[0] = np.inf
        d2[q] = best[0]
        face[q] = int(best[1])
        bary[q, 0] = best[2]
        bary[q, 1] = best[3]
        bary[q, 2] = best[4]
        act[q] = int(best[5])


@njit(cache=True, parallel=True)
def _closest_brute_batch(P, V, F, face, bary, act, d2):
    for q in prange(P.shape[0]):
        px, py, pz = P[q, 0], P[q, 1], P[q, 2]
        bd = np.inf
        bf = -1
        b0 = b1 = b2 = 0.0
        ba = 0
        for f in range(F.shape[0]):
            dd, c0, c1, c2, na = closest_on_face(px, py, pz, V, F[f, 0], F[f, 1], F[f, 2])
            if dd < bd:
                bd, bf, b0, b1, b2, ba = dd, f, c0, c1, c2, na
        d2[q] = bd
        face[q] = bf
        bary[q, 0] = b0
        bary[q, 1] = b1
        bary[q, 2] = b2
        act[q] = ba


def _pack(mesh, P, face, bary, act, d2):
    tri = mesh.vertices[mesh.faces[np.maximum(face, 0)]]
    pts = np.einsum("nj,njk->nk", bary, tri)
    pts[face < 0] = np.nan
    return ClosestPoints(face, bary, pts, np.sqrt(d2), act)


def closest_points(mesh: TriMesh, points, grid: VoxelGrid | None = None,
                   max_distance: float = np.inf) -> ClosestPoints:
    """Exact closest surface point for each query.

    With ``grid`` the hierarchical voxel search is used, otherwise every face
    is scanned. Both give the same face (lowest index among exact ties)
    and the same distance. With a finite ``max_distance`` (grid path only)
    the search stops early; queries with nothing strictly closer get face
    -1 and distance ``inf``.
    """
    P = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
    n = len(P)
    face = np.empty(n, np.int64)
    bary = np.empty((n, 3))
    act = np.empty(n, np.int64)
    d2 = np.empty(n)
    if mesh.n_faces == 0:
        raise MeshError("closest point query on an empty mesh")
    if grid is None:
        if np.isfinite(max_distance):
            raise ValueError("max_distance needs a grid")
        _closest_brute_batch(P, mesh.vertices, mesh.faces, face, bary, act, d2)
    else:
        if grid.n_faces != mesh.n_faces:
            raise ValueError("grid was built for a different mesh")
        _closest_grid_batch(P, mesh.vertices, mesh.faces, grid.origin, grid.cell_size,
                            np.asarray(grid.dims, np.int64), grid.cell_start, grid.cell_faces,
                            *_offset_table(TABLE_RADIUS), BLOCK, *grid.blocks(),
                            face, bary, act, d2, float(max_distance) ** 2)
    return _pack(mesh, P, face, bary, act, d2)


def brute_closest_points(mesh: TriMesh, points) -> ClosestPoints:
    return closest_points(mesh, points, None)


def accel_closest_point(grid: VoxelGrid, mesh: TriMesh, x):
    """Single-point form: ``(face_id, barycentric, point, distance)``."""
    r = closest_points(mesh, np.asarray(x, dtype=np.float64)[None], grid)
    return int(r.face[0]), r.barycentric[0], r.point[0], float(r.distance[0])
