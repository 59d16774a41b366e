"""Pinhole cameras and a z-buffer depth rasterizer.

Conventions: ``x_cam = R @ x_world + t``, camera looks along +z, image
``u`` grows right and ``v`` grows down. Pixel ``(row j, col i)`` covers
``[i, i+1) x [j, j+1)`` in image coordinates, so its center is at
``(i + 0.5, j + 0.5)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .mesh import TriMesh

NEAR = 1e-6
TILE_ROWS = 16


@dataclass(frozen=True, eq=False)
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray
    translation: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if np.abs(R @ R.T - np.eye(3)).max() > 1e-6 or abs(np.linalg.det(R) - 1) > 1e-6:
            raise ValueError("rotation must be orthonormal with det +1")
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the image")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @property
    def center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.translation

    @property
    def shape(self) -> tuple:
        return (self.height, self.width)

    def to_camera(self, points) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def project(self, points):
        """Image coordinates ``(u, v)`` and view depth ``z`` of world points."""
        pc = self.to_camera(points)
        z = pc[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * pc[..., 0] / z + self.cx
            v = self.fy * pc[..., 1] / z + self.cy
        return np.stack([u, v], -1), z

    def pixel_rays(self, pixels=None):
        """Unit world-space rays through pixel centers.

        ``pixels`` is an ``(n, 2)`` array of ``(u, v)`` image coordinates;
        by default all pixel centers in row-major order.
        """
        if pixels is None:
            jj, ii = np.meshgrid(np.arange(self.height), np.arange(self.width), indexing="ij")
            pixels = np.stack([ii.ravel() + 0.5, jj.ravel() + 0.5], -1)
        pixels = np.asarray(pixels, dtype=np.float64)
        dc = np.stack([(pixels[:, 0] - self.cx) / self.fx,
                       (pixels[:, 1] - self.cy) / self.fy,
                       np.ones(len(pixels))], -1)
        dc /= np.linalg.norm(dc, axis=1, keepdims=True)
        dw = dc @ self.rotation
        return np.broadcast_to(self.center, dw.shape).copy(), dw

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "rotation": self.rotation.tolist(), "translation": self.translation.tolist(),
                "width": self.width, "height": self.height}

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                   d["rotation"], d["translation"], int(d["width"]), int(d["height"]))


def look_at(eye, target=(0.0, 0.0, 0.0), up=(0.0, 1.0, 0.0), width: int = 128, height: int = 128,
            fov_deg: float = 40.0) -> Camera:
    """Camera at ``eye`` looking at ``target`` with vertical field of view ``fov_deg``."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd /= np.linalg.norm(fwd)
    up = np.asarray(up, dtype=np.float64)
    right = np.cross(fwd, up)
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(fwd, [1.0, 0.0, 0.0] if abs(fwd[0]) < 0.9 else [0.0, 0.0, 1.0])
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    R = np.stack([right, down, fwd])
    f = 0.5 * height / np.tan(np.radians(fov_deg) / 2)
    return Camera(f, f, width / 2.0, height / 2.0, R, -R @ eye, width, height)


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Per-pixel view depth; ``inf`` marks pixels with no surface."""

    depth: np.ndarray  # (height, width)

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def covered(self) -> np.ndarray:
        return np.isfinite(self.depth)


# ---------------------------------------------------------------- rasterizer

def _clip_near(tri_cam, near):
    """Sutherland-Hodgman clip of one camera-space triangle against z >= near."""
    out = []
    for k in range(3):
        a, b = tri_cam[k], tri_cam[(k + 1) % 3]
        ina, inb = a[2] >= near, b[2] >= near
        if ina:
            out.append(a)
        if ina != inb:
            s = (near - a[2]) / (b[2] - a[2])
            out.append(a + s * (b - a))
    return out


def _screen_triangles(mesh: TriMesh, cam: Camera, near: float):
    """Projected triangles ``(u, v, 1/z)`` after near-plane clipping."""
    tri = cam.to_camera(mesh.vertices)[mesh.faces]
    z = tri[..., 2]
    keep_all = (z >= near).all(1)
    parts = [tri[keep_all]]
    partial = np.nonzero(~keep_all & (z >= near).any(1))[0]
    extra = []
    for f in partial:
        poly = _clip_near(tri[f], near)
        for k in range(1, len(poly) - 1):
            extra.append([poly[0], poly[k], poly[k + 1]])
    if extra:
        parts.append(np.array(extra))
    tc = np.concatenate(parts) if parts else np.zeros((0, 3, 3))
    iz = 1.0 / tc[..., 2]
    u = cam.fx * tc[..., 0] * iz + cam.cx
    v = cam.fy * tc[..., 1] * iz + cam.cy
    return np.ascontiguousarray(np.stack([u, v, iz], -1))


@njit(cache=True, inline="always")
def _top_left(du, dv):
    return dv < 0.0 or (dv == 0.0 and du > 0.0)


@njit(cache=True, parallel=True)
def _raster(S, height, width, tile, depth):
    ntiles = (height + tile - 1) // tile
    for t in prange(ntiles):
        r0 = t * tile
        r1 = min(r0 + tile, height)
        for n in range(S.shape[0]):
            u0, v0, w0 = S[n, 0, 0], S[n, 0, 1], S[n, 0, 2]
            u1, v1, w1 = S[n, 1, 0], S[n, 1, 1], S[n, 1, 2]
            u2, v2, w2 = S[n, 2, 0], S[n, 2, 1], S[n, 2, 2]
            area = (u1 - u0) * (v2 - v0) - (v1 - v0) * (u2 - u0)
            if area == 0.0 or not np.isfinite(area):
                continue
            if area < 0.0:
                u1, v1, w1, u2, v2, w2 = u2, v2, w2, u1, v1, w1
                area = -area
            vmin = min(v0, min(v1, v2))
            vmax = max(v0, max(v1, v2))
            umin = min(u0, min(u1, u2))
            umax = max(u0, max(u1, u2))
            j0 = max(r0, int(np.ceil(vmin - 0.5)))
            j1 = min(r1 - 1, int(np.floor(vmax - 0.5)))
            i0 = max(0, int(np.ceil(umin - 0.5)))
            i1 = min(width - 1, int(np.floor(umax - 0.5)))
            tl0 = _top_left(u2 - u1, v2 - v1)
            tl1 = _top_left(u0 - u2, v0 - v2)
            tl2 = _top_left(u1 - u0, v1 - v0)
            inv_area = 1.0 / area
            for j in range(j0, j1 + 1):
                pv = j + 0.5
                for i in range(i0, i1 + 1):
                    pu = i + 0.5
                    e0 = (u2 - u1) * (pv - v1) - (v2 - v1) * (pu - u1)
                    e1 = (u0 - u2) * (pv - v2) - (v0 - v2) * (pu - u2)
                    e2 = (u1 - u0) * (pv - v0) - (v1 - v0) * (pu - u0)
                    if e0 < 0.0 or (e0 == 0.0 and not tl0):
                        continue
                    if e1 < 0.0 or (e1 == 0.0 and not tl1):
                        continue
                    if e2 < 0.0 or (e2 == 0.0 and not tl2):
                        continue
                    iz = (e0 * w0 + e1 * w1 + e2 * w2) * inv_area
                    if iz > 0.0:
                        zz = 1.0 / iz
                        if zz < depth[j, i]:
                            depth[j, i] = zz


def rasterize_depth(mesh: TriMesh, camera: Camera, near: float = NEAR) -> DepthMap:
    """Nearest view-space depth per pixel center, ``inf`` where uncovered.

    Back faces are not culled. Depth is interpolated perspective-correctly
    (linear in ``1/z`` over the screen). Pixel rows are processed in
    independent tiles; the min-depth merge makes the result independent of
    scheduling.
    """
    S = _screen_triangles(mesh, camera, near)
    depth = np.full((camera.height, camera.width), np.inf)
    if len(S):
        _raster(S, camera.height, camera.width, TILE_ROWS, depth)
    return DepthMap(depth)
