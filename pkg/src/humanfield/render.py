"""Radiance fields, volume-rendering quadrature and isosurface extraction.

A field is any object with ``__call__(points, dirs) -> (sigma, rgb)`` on
``(n, 3)`` arrays. Fields may also expose ``features(points, dirs)``; the
blend stage uses it as the per-sample feature vector.
"""
from __future__ import annotations

import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numpy as np
from skimage import measure

from .camera import Camera
from .grid import closest_points, get_grid
from .mesh import TriMesh, drop_degenerate
from .sampling import SampleFlag, make_ray_batch

CHUNK_RAYS = 4096


@dataclass(frozen=True)
class FieldSample:
    sigma: np.ndarray
    color: np.ndarray
    feature: Optional[np.ndarray] = None


@dataclass(frozen=True)
class UniformBall:
    center: Sequence[float] = (0.0, 0.0, 0.0)
    radius: float = 1.0
    sigma: float = 50.0
    color: Sequence[float] = (1.0, 0.5, 0.25)

    def __call__(self, x, d=None):
        x = np.asarray(x, dtype=np.float64)
        inside = np.sum((x - np.asarray(self.center)) ** 2, -1) <= self.radius ** 2
        s = np.where(inside, float(self.sigma), 0.0)
        c = np.where(inside[..., None], np.clip(self.color, 0, 1), 0.0)
        return s, c


@dataclass(frozen=True)
class GaussianBlob:
    center: Sequence[float] = (0.0, 0.0, 0.0)
    scale: float = 0.3
    sigma: float = 20.0
    color: Sequence[float] = (0.2, 0.6, 1.0)

    def __call__(self, x, d=None):
        x = np.asarray(x, dtype=np.float64)
        r2 = np.sum((x - np.asarray(self.center)) ** 2, -1)
        s = self.sigma * np.exp(-r2 / (2 * self.scale ** 2))
        return s, np.broadcast_to(np.clip(self.color, 0, 1), x.shape).copy()


@dataclass(frozen=True)
class AxisSlab:
    """Constant density between ``lo <= x[axis] <= hi``."""

    lo: float
    hi: float
    sigma: float
    color: Sequence[float]
    axis: int = 2

    def __call__(self, x, d=None):
        x = np.asarray(x, dtype=np.float64)
        inside = (x[..., self.axis] >= self.lo) & (x[..., self.axis] <= self.hi)
        s = np.where(inside, float(self.sigma), 0.0)
        return s, np.where(inside[..., None], np.clip(self.color, 0, 1), 0.0)


@dataclass(frozen=True)
class SumField:
    """Densities add; colors mix in proportion to density."""

    fields: tuple

    def __call__(self, x, d=None):
        parts = [f(x, d) for f in self.fields]
        s = sum(p[0] for p in parts)
        with np.errstate(invalid="ignore", divide="ignore"):
            c = sum(p[0][..., None] * p[1] for p in parts) / s[..., None]
        return s, np.where(s[..., None] > 0, c, 0.0)


@dataclass(frozen=True)
class EmptyField:
    def __call__(self, x, d=None):
        x = np.asarray(x)
        return np.zeros(x.shape[:-1]), np.zeros(x.shape)


@dataclass(eq=False)
class MeshShell:
    """Density ``sigma`` within distance ``width`` of a mesh surface, else 0."""

    mesh: TriMesh
    width: float
    sigma: float = 50.0
    color: Sequence[float] = (0.8, 0.8, 0.8)
    resolution: int = 64

    def __call__(self, x, d=None):
        x = np.asarray(x, dtype=np.float64)
        shape = x.shape[:-1]
        cp = closest_points(self.mesh, x.reshape(-1, 3), get_grid(self.mesh, self.resolution),
                            max_distance=self.width)
        band = (cp.distance < self.width).reshape(shape)
        s = np.where(band, float(self.sigma), 0.0)
        return s, np.where(band[..., None], np.clip(self.color, 0, 1), 0.0)


def field_eval(field, x, d=None) -> FieldSample:
    x = np.asarray(x, dtype=np.float64)
    if d is None:
        d = np.broadcast_to([0.0, 0.0, 1.0], x.shape)
    s, c = field(x, d)
    feat = field.features(x, d) if hasattr(field, "features") else None
    return FieldSample(np.maximum(s, 0.0), np.clip(c, 0.0, 1.0), feat)


def occupancy(sigma):
    """Occupancy probability ``tanh(sigma)`` for non-negative densities."""
    return np.tanh(np.asarray(sigma, dtype=np.float64))


# ------------------------------------------------------------ quadrature

def integrate_ray(depths, t_far, sigma, color, flags=None, return_transmittance: bool = False):
    """Alpha-composite samples along rays.

    ``delta_i = t_{i+1} - t_i`` with the last interval closed at ``t_far``;
    ``alpha_i = 1 - exp(-sigma_i delta_i)``; ``T_i = prod_{j<i}(1 - alpha_j)``.
    Returns premultiplied ``color``, ``alpha`` and ``expected_depth`` (0 when
    alpha is 0). Samples flagged ``OUTSIDE_HULL`` contribute nothing.
    """
    t = np.atleast_2d(np.asarray(depths, dtype=np.float64))
    s = np.atleast_2d(np.asarray(sigma, dtype=np.float64)).copy()
    c = np.asarray(color, dtype=np.float64).reshape(t.shape + (3,)).copy()
    tf = np.broadcast_to(np.asarray(t_far, dtype=np.float64), t.shape[:1])
    if np.any(np.diff(t, axis=1) <= 0):
        raise ValueError("sample depths must be strictly increasing")
    if np.any(tf < t[:, -1]):
        raise ValueError("t_far precedes the last sample")
    if flags is not None:
        out = np.atleast_2d(flags) == SampleFlag.OUTSIDE_HULL
        s[out] = 0.0
        c[out] = 0.0
    delta = np.diff(np.concatenate([t, tf[:, None]], 1), axis=1)
    tau = s * delta
    a = -np.expm1(-tau)
    # exclusive cumulative transmittance
    T = np.exp(-np.concatenate([np.zeros((len(t), 1)), np.cumsum(tau, 1)[:, :-1]], 1))
    w = T * a
    alpha = w.sum(1)
    rgb = (w[..., None] * c).sum(1)
    with np.errstate(invalid="ignore", divide="ignore"):
        depth = np.where(alpha > 0, (w * t).sum(1) / alpha, 0.0)
    if return_transmittance:
        return rgb, alpha, depth, np.exp(-tau.sum(1))
    return rgb, alpha, depth


@dataclass
class RenderOutput:
    color: np.ndarray           # (H, W, 3) premultiplied
    alpha: np.ndarray           # (H, W)
    expected_depth: np.ndarray  # (H, W)
    timings: dict = dc_field(default_factory=dict)


def render_image(camera: Camera, field, box, n_samples: int = 256, seed: int = 0,
                 cameras=None, masks=None, blend: Optional[Callable] = None,
                 threads: int = 1, chunk: int = CHUNK_RAYS, jitter: bool = True) -> RenderOutput:
    """Render every pixel of ``camera``.

    ``box`` bounds the scene (a mesh or ``(lo, hi)``). With ``cameras`` and
    dilated ``masks`` sampling is restricted to the visual hull. ``blend``,
    if given, maps ``(points, dirs, sigma, c0, features)`` to the final
    per-sample color. The result does not depend on ``threads`` or
    ``chunk``: each ray's samples are keyed by its pixel index.
    """
    t0 = time.perf_counter()
    O, D = camera.pixel_rays()
    n = len(O)
    color = np.zeros((n, 3))
    alpha = np.zeros(n)
    depth = np.zeros(n)
    timings = {"sampling": 0.0, "field": 0.0, "blend": 0.0, "integration": 0.0}

    def work(start):
        sl = slice(start, min(start + chunk, n))
        tm = {}
        a = time.perf_counter()
        rb = make_ray_batch(O[sl], D[sl], box, n_samples, seed, cameras, masks,
                            ray_offset=start, jitter=jitter)
        tm["sampling"] = time.perf_counter() - a
        live = np.nonzero(rb.alive)[0]
        if not len(live):
            return tm
        a = time.perf_counter()
        pts = rb.points[live].reshape(-1, 3)
        dirs = np.repeat(rb.directions[live], n_samples, axis=0)
        fs = field_eval(field, pts, dirs)
        tm["field"] = time.perf_counter() - a
        c = fs.color
        if blend is not None:
            a = time.perf_counter()
            c = blend(pts, dirs, fs.sigma, fs.color, fs.feature)
            tm["blend"] = time.perf_counter() - a
        a = time.perf_counter()
        rgb, al, dep = integrate_ray(rb.depths[live], rb.t_far[live],
                                     fs.sigma.reshape(len(live), n_samples),
                                     c.reshape(len(live), n_samples, 3), rb.flags[live])
        idx = sl.start + live
        color[idx] = rgb
        alpha[idx] = al
        depth[idx] = dep
        tm["integration"] = time.perf_counter() - a
        return tm

    starts = range(0, n, chunk)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(work, starts))
    else:
        results = [work(s) for s in starts]
    for tm in results:
        for k, v in tm.items():
            timings[k] += v
    timings["total"] = time.perf_counter() - t0
    H, W = camera.height, camera.width
    return RenderOutput(color.reshape(H, W, 3), alpha.reshape(H, W), depth.reshape(H, W), timings)


# ------------------------------------------------------------ encodings

def positional_encoding(x, octaves: int = 10) -> np.ndarray:
    """``[x, sin(2^k pi x), cos(2^k pi x)]`` for k < octaves."""
    x = np.asarray(x, dtype=np.float64)
    freq = (2.0 ** np.arange(octaves)) * np.pi
    xf = x[..., None, :] * freq[:, None]
    enc = np.concatenate([np.sin(xf), np.cos(xf)], -2).reshape(x.shape[:-1] + (-1,))
    return np.concatenate([x, enc], -1)


def spherical_harmonics(d, degree: int = 2) -> np.ndarray:
    """Real orthonormal spherical harmonics of unit directions up to ``degree`` (<= 3)."""
    d = np.asarray(d, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    out = [np.full(x.shape, 0.28209479177387814)]
    if degree >= 1:
        out += [-0.4886025119029199 * y, 0.4886025119029199 * z, -0.4886025119029199 * x]
    if degree >= 2:
        out += [1.0925484305920792 * x * y, -1.0925484305920792 * y * z,
                0.31539156525252005 * (2 * z * z - x * x - y * y),
                -1.0925484305920792 * x * z, 0.5462742152960396 * (x * x - y * y)]
    if degree >= 3:
        out += [-0.5900435899266435 * y * (3 * x * x - y * y), 2.890611442640554 * x * y * z,
                -0.4570457994644658 * y * (4 * z * z - x * x - y * y),
                0.3731763325901154 * z * (2 * z * z - 3 * x * x - 3 * y * y),
                -0.4570457994644658 * x * (4 * z * z - x * x - y * y),
                1.445305721320277 * z * (x * x - y * y),
                -0.5900435899266435 * x * (x * x - 3 * y * y)]
    return np.stack(out, -1)


# ------------------------------------------------------------ isosurface

def lattice(box, resolution: int):
    lo, hi = (np.asarray(b, dtype=np.float64) for b in box)
    axes = [np.linspace(lo[a], hi[a], resolution) for a in range(3)]
    return axes, (hi - lo) / (resolution - 1)


def extract_isosurface(field, resolution: int = 256, threshold: float = 0.5,
                       box=((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0)), frame=None) -> TriMesh:
    """Marching cubes on ``tanh(sigma)`` sampled at ``resolution^3`` lattice points.

    The lattice spans ``box``; with a ``frame`` the box is in normalized
    coordinates and the field is evaluated (and the mesh returned) in world
    space. Faces are wound so normals point out of the occupied region.
    """
    if resolution < 8:
        raise ValueError("resolution must be >= 8")
    (ax, ay, az), spacing = lattice(box, resolution)
    occ = np.empty((resolution,) * 3)
    yy, zz = np.meshgrid(ay, az, indexing="ij")
    for i, x in enumerate(ax):
        p = np.stack([np.full(yy.shape, x), yy, zz], -1).reshape(-1, 3)
        if frame is not None:
            p = frame.apply_inverse(p)
        occ[i] = occupancy(field_eval(field, p).sigma).reshape(yy.shape)
    if not (occ.min() < threshold < occ.max()):
        warnings.warn("isosurface is empty", RuntimeWarning, stacklevel=2)
        return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), np.int64))
    verts, faces, _, _ = measure.marching_cubes(occ, level=threshold, spacing=tuple(spacing))
    verts = verts + np.asarray(box[0], dtype=np.float64)
    if frame is not None:
        verts = frame.apply_inverse(verts)
    mesh = drop_degenerate(TriMesh(verts, faces))
    # orient outward: total signed volume of the occupied region is positive
    tri = mesh.triangles()
    vol = np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])).sum()
    if vol < 0:
        mesh = TriMesh(mesh.vertices, mesh.faces[:, ::-1])
    return mesh
