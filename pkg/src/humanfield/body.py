"""Implicit body shape encoding over a posed triangle mesh.

For a query point ``x`` the encoding is ``(sdf, grad, canonical_point)``:

* ``sdf`` is the signed distance to the closest surface point ``v``, with
  the sign **positive inside** the mesh and negative outside;
* ``grad = sign * (x - v) / |x - v|``, a unit vector (undefined on the
  surface);
* ``canonical_point`` is ``v`` re-expressed on the canonical-pose mesh by
  re-using its face and barycentric weights.

All three come from one closest-point query, so they always refer to the
same face (the lowest-indexed one among exact ties).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .grid import VoxelGrid, closest_points, get_grid
from .mesh import DEGENERATE_AREA, MeshError, TriMesh, is_watertight
from .raycast import crossing_parity

ON_SURFACE = 1e-9


class NotWatertightError(MeshError):
    pass


class OnSurfaceWarning(UserWarning):
    pass


# ------------------------------------------------------------ triangle QP

def closest_point_on_triangle(x, v1, v2, v3, max_iter: int = 10):
    """Minimise ``|c1 v1 + c2 v2 + c3 v3 - x|`` over the probability simplex.

    Primal active-set method on the barycentric QP. Each iteration solves
    the equality-constrained subproblem on the current free set with a
    KKT system of size at most 4x4. Returns ``(c, point, active_set_size)``
    where ``active_set_size`` is 0 for an interior solution, 1 on an edge
    and 2 at a vertex.
    """
    x = np.asarray(x, dtype=np.float64)
    V = np.stack([np.asarray(v, dtype=np.float64) for v in (v1, v2, v3)], axis=1)  # columns
    if 0.5 * np.linalg.norm(np.cross(V[:, 1] - V[:, 0], V[:, 2] - V[:, 0])) < DEGENERATE_AREA:
        raise MeshError("degenerate triangle")
    # work relative to x to keep the Hessian well scaled
    D = V - x[:, None]
    G = D.T @ D
    c = np.full(3, 1.0 / 3.0)
    active: list[int] = []
    tol = 1e-14 * max(1.0, np.abs(G).max())
    for _ in range(max_iter):
        free = [i for i in range(3) if i not in active]
        nf = len(free)
        K = np.zeros((nf + 1, nf + 1))
        K[:nf, :nf] = G[np.ix_(free, free)]
        K[:nf, nf] = 1.0
        K[nf, :nf] = 1.0
        rhs = np.zeros(nf + 1)
        rhs[nf] = 1.0
        sol = np.linalg.solve(K, rhs)
        target = np.zeros(3)
        target[free] = sol[:nf]
        step = target - c
        if np.all(target[free] >= 0.0):
            c = target
            grad = G @ c
            mu = -sol[nf]  # multiplier of the sum constraint: grad_f = mu
            lam = {i: grad[i] - mu for i in active}
            if not lam or min(lam.values()) >= -tol:
                break
            active.remove(min(lam, key=lam.get))
        else:
            # move toward the subproblem optimum until a weight hits zero
            # only weights whose target is negative can block; the ratio may
            # round to 1 when the target is a tiny negative number
            alpha, block = np.inf, None
            for i in free:
                if target[i] < 0.0:
                    a = c[i] / -step[i]
                    if a < alpha:
                        alpha, block = a, i
            alpha = min(alpha, 1.0)
            c = c + alpha * step
            c[block] = 0.0
            active.append(block)
    c = np.maximum(c, 0.0)
    c /= c.sum()
    return c, V @ c, len(active)


# ------------------------------------------------------------- embeddings

@dataclass(frozen=True)
class BodyEmbedding:
    sdf: np.ndarray              # (n,) signed, positive inside
    grad: np.ndarray             # (n, 3), NaN where |sdf| <= ON_SURFACE
    canonical_point: np.ndarray  # (n, 3)
    face: np.ndarray             # (n,)
    barycentric: np.ndarray      # (n, 3)
    closest: np.ndarray          # (n, 3) closest point on the posed mesh

    def features(self) -> np.ndarray:
        """Concatenated ``[sdf, grad, canonical_point]`` rows, shape (n, 7)."""
        return np.concatenate([self.sdf[:, None], self.grad, self.canonical_point], 1)


def _require_watertight(mesh: TriMesh) -> None:
    if "watertight" not in mesh._cache:
        mesh._cache["watertight"] = is_watertight(mesh)
    if not mesh._cache["watertight"]:
        raise NotWatertightError("inside/outside test requires a watertight mesh")


def _points(x):
    P = np.asarray(x, dtype=np.float64)
    return P.reshape(-1, 3), P.ndim == 1


def _grid(mesh, grid):
    return get_grid(mesh) if grid is None else grid


def signs(mesh: TriMesh, points, grid: VoxelGrid | None = None, distance=None) -> np.ndarray:
    """+1 inside, -1 outside, by crossing parity. Points within ``ON_SURFACE`` of
    the surface get -1 and an :class:`OnSurfaceWarning`."""
    _require_watertight(mesh)
    grid = _grid(mesh, grid)
    P, _ = _points(points)
    s = np.where(crossing_parity(mesh, grid, P) == 1, 1.0, -1.0)
    if distance is None:
        distance = closest_points(mesh, P, grid).distance
    on = distance <= ON_SURFACE
    if on.any():
        warnings.warn(f"{int(on.sum())} point(s) on the surface; reported as outside",
                      OnSurfaceWarning, stacklevel=2)
        s[on] = -1.0
    return s


def sign_of(x, mesh: TriMesh, grid: VoxelGrid | None = None):
    P, single = _points(x)
    s = signs(mesh, P, grid)
    return int(s[0]) if single else s.astype(np.int64)


def embed(mesh: TriMesh, points, grid: VoxelGrid | None = None,
          canonical: bool = True) -> BodyEmbedding:
    """Batch body encoding from a single closest-point search per point."""
    _require_watertight(mesh)
    grid = _grid(mesh, grid)
    P, _ = _points(points)
    cp = closest_points(mesh, P, grid)
    on = cp.distance <= ON_SURFACE
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OnSurfaceWarning)
        s = signs(mesh, P, grid, cp.distance)
    sdf = np.where(on, 0.0, s * cp.distance)
    with np.errstate(invalid="ignore", divide="ignore"):
        grad = s[:, None] * (P - cp.point) / cp.distance[:, None]
    grad[on] = np.nan
    if canonical:
        if mesh.canonical_vertices is None:
            raise MeshError("mesh has no canonical vertices")
        can = canonical_points(mesh, cp.face, cp.barycentric)
    else:
        can = np.full_like(P, np.nan)
    return BodyEmbedding(sdf, grad, can, cp.face, cp.barycentric, cp.point)


def sdf(x, mesh: TriMesh, grid: VoxelGrid | None = None):
    """Signed distance, positive inside; exactly 0 within ``ON_SURFACE``."""
    P, single = _points(x)
    e = embed(mesh, P, grid, canonical=False)
    return float(e.sdf[0]) if single else e.sdf


def sdf_gradient(x, mesh: TriMesh, grid: VoxelGrid | None = None):
    """``sign * (x - v) / |x - v|``; raises for on-surface points."""
    P, single = _points(x)
    e = embed(mesh, P, grid, canonical=False)
    bad = np.abs(e.sdf) <= ON_SURFACE
    if bad.any():
        raise ValueError(f"gradient undefined on the surface at {np.nonzero(bad)[0][:10].tolist()}")
    return e.grad[0] if single else e.grad


def canonical_points(mesh: TriMesh, face, barycentric) -> np.ndarray:
    if mesh.canonical_vertices is None:
        raise MeshError("mesh has no canonical vertices")
    face = np.asarray(face, dtype=np.int64).reshape(-1)
    b = np.asarray(barycentric, dtype=np.float64).reshape(-1, 3)
    return np.einsum("nj,njk->nk", b, mesh.canonical_vertices[mesh.faces[face]])


def canonical_correspondence(face_id, barycentric, mesh: TriMesh) -> np.ndarray:
    """Same barycentric weights applied to the canonical vertices of ``face_id``."""
    out = canonical_points(mesh, face_id, barycentric)
    return out[0] if np.ndim(face_id) == 0 else out


def body_embedding(x, mesh: TriMesh, grid: VoxelGrid | None = None) -> BodyEmbedding:
    P, _ = _points(x)
    return embed(mesh, P, grid)


def unsigned_distance(mesh: TriMesh, points, grid: VoxelGrid | None = None) -> np.ndarray:
    """Distance to the surface; needs no watertightness."""
    return closest_points(mesh, _points(points)[0], _grid(mesh, grid)).distance


# ------------------------------------------------------- normalized frame

@dataclass(frozen=True)
class NormalizedFrame:
    """``y = scale * (rotation @ x - center)``; directions map by ``rotation``."""

    rotation: np.ndarray
    center: np.ndarray
    scale: float

    def apply(self, x) -> np.ndarray:
        return self.scale * (np.asarray(x, dtype=np.float64) @ self.rotation.T - self.center)

    def apply_inverse(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=np.float64) / self.scale + self.center) @ self.rotation

    def apply_direction(self, d) -> np.ndarray:
        return np.asarray(d, dtype=np.float64) @ self.rotation.T

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.tolist(), "center": self.center.tolist(),
                "scale": self.scale}


def normalize_frame(mesh: TriMesh, global_rotation=None) -> NormalizedFrame:
    """Frame that un-rotates by the body's global orientation and maps the
    mesh's bounding box into ``[-1, 1)^3`` with one uniform scale."""
    if mesh.n_vertices == 0:
        raise MeshError("empty mesh")
    Rg = np.eye(3) if global_rotation is None else np.asarray(global_rotation, dtype=np.float64)
    R = Rg.T
    rv = mesh.vertices @ R.T
    lo, hi = rv.min(0), rv.max(0)
    center = 0.5 * (lo + hi)
    half = 0.5 * float((hi - lo).max())
    if half <= 0:
        raise MeshError("mesh has zero extent")
    # shrink by a relative 1e-12 so the maximum lands strictly below 1
    return NormalizedFrame(R, center, (1.0 - 1e-12) / half)
