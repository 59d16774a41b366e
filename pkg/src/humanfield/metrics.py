"""Image and surface reconstruction metrics, plus the training losses as
offline measurements."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import gaussian_filter

from .body import signs
from .grid import closest_points, get_grid
from .mesh import MeshError, TriMesh, sample_surface
from .render import occupancy

PSNR_CAP = 99.0
LUMA = np.array([0.299, 0.587, 0.114])
DEFAULT_SAMPLES = 100_000


@dataclass
class MetricReport:
    psnr: Optional[float] = None
    ssim: Optional[float] = None
    chamfer: Optional[float] = None
    normal_dist: Optional[float] = None
    uhd: Optional[float] = None
    fscore: Optional[float] = None
    photometric_loss: Optional[float] = None
    geometry_loss: Optional[float] = None

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


# ------------------------------------------------------------------ images

def _pair(image, reference):
    a = np.asarray(image, dtype=np.float64)
    b = np.asarray(reference, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(image, reference, mask=None) -> float:
    """``10 log10(1 / MSE)`` over (masked) pixels; identical images give 99 dB."""
    a, b = _pair(image, reference)
    err = (a - b) ** 2
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        if m.shape != a.shape[:2]:
            raise ValueError("mask shape does not match image")
        if not m.any():
            raise ValueError("empty mask")
        err = err[m]
    mse = float(err.mean())
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def to_gray(image) -> np.ndarray:
    a = np.asarray(image, dtype=np.float64)
    return a @ LUMA if a.ndim == 3 else a


def ssim(image, reference, sigma: float = 1.5, win: int = 11,
         k1: float = 0.01, k2: float = 0.03, data_range: float = 1.0) -> float:
    """Mean SSIM on luma with an 11x11 Gaussian window (sigma 1.5), valid region only."""
    a, b = _pair(image, reference)
    x, y = to_gray(a), to_gray(b)
    if min(x.shape) < win:
        raise ValueError(f"image smaller than the {win}x{win} window")
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    trunc = (win // 2) / sigma
    f = lambda z: gaussian_filter(z, sigma, truncate=trunc, mode="reflect")  # noqa: E731
    mx, my = f(x), f(y)
    sxx = f(x * x) - mx * mx
    syy = f(y * y) - my * my
    sxy = f(x * y) - mx * my
    s = ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2))
    h = win // 2
    return float(s[h:-h, h:-h].mean())


# ---------------------------------------------------------------- surfaces

def _one_way(src: TriMesh, dst: TriMesh, samples: int, seed: int):
    if src.n_faces == 0 or dst.n_faces == 0:
        raise MeshError("metric on an empty mesh")
    pts, fid = sample_surface(src, samples, seed)
    cp = closest_points(dst, pts, get_grid(dst))
    # closest point on an edge or vertex: the face is a tie, so use the
    # offset-surface normal there (continuous and frame independent)
    nd = dst.face_normals()[cp.face]
    off = (cp.active > 0) & (cp.distance > 1e-12 * dst.diagonal())
    nd[off] = (pts[off] - cp.point[off]) / cp.distance[off, None]
    cos = np.abs(np.einsum("ij,ij->i", src.face_normals()[fid], nd))
    return cp.distance, np.maximum(1.0 - cos, 0.0)


@dataclass
class SurfaceDistances:
    a_to_b: np.ndarray
    b_to_a: np.ndarray
    normal_a: np.ndarray
    normal_b: np.ndarray

    @property
    def chamfer(self) -> float:
        return 0.5 * (self.a_to_b.mean() + self.b_to_a.mean())

    @property
    def normal_dist(self) -> float:
        return 0.5 * (self.normal_a.mean() + self.normal_b.mean())

    @property
    def uhd(self) -> float:
        return float(max(self.a_to_b.max(), self.b_to_a.max()))

    def fscore(self, threshold: float) -> float:
        if threshold <= 0:
            raise ValueError("threshold must be positive")
        p = float((self.a_to_b < threshold).mean())
        r = float((self.b_to_a < threshold).mean())
        return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def surface_distances(mesh_a: TriMesh, mesh_b: TriMesh, samples: int = DEFAULT_SAMPLES,
                      seed: int = 0) -> SurfaceDistances:
    """Point-to-surface distances from area-weighted samples, both directions."""
    da, na = _one_way(mesh_a, mesh_b, samples, seed)
    db, nb = _one_way(mesh_b, mesh_a, samples, seed + 1)
    return SurfaceDistances(da, db, na, nb)


def chamfer(mesh_a: TriMesh, mesh_b: TriMesh, samples: int = DEFAULT_SAMPLES, seed: int = 0):
    """Symmetric mean sample-to-surface distance and normal distance
    ``mean(1 - |n_sample . n_closest|)``.

    ``n_closest`` is the closest face's normal, or the unit offset direction
    when the closest point lies on an edge or a vertex."""
    sd = surface_distances(mesh_a, mesh_b, samples, seed)
    return float(sd.chamfer), float(sd.normal_dist)


def uhd(mesh_a: TriMesh, mesh_b: TriMesh, samples: int = DEFAULT_SAMPLES, seed: int = 0) -> float:
    """Sampled two-sided Hausdorff distance."""
    return surface_distances(mesh_a, mesh_b, samples, seed).uhd


def fscore(mesh_a: TriMesh, mesh_b: TriMesh, threshold: float, samples: int = DEFAULT_SAMPLES,
           seed: int = 0) -> float:
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    return surface_distances(mesh_a, mesh_b, samples, seed).fscore(threshold)


# ------------------------------------------------------------------ losses

def photometric_loss(c, c0, reference) -> float:
    """Sum over rays of both squared color errors, divided by the ray count."""
    c = np.asarray(c, dtype=np.float64).reshape(-1, 3)
    c0 = np.asarray(c0, dtype=np.float64).reshape(-1, 3)
    ref = np.asarray(reference, dtype=np.float64).reshape(-1, 3)
    if not (len(c) == len(c0) == len(ref)):
        raise ValueError("ray counts differ")
    return float((((c0 - ref) ** 2).sum(1) + ((c - ref) ** 2).sum(1)).sum() / len(ref))


def geometry_loss(sigma, inside_labels, visibility, occlusion_targets) -> float:
    """Occupancy term ``(tanh(sigma) - label)^2`` plus occlusion term
    ``(o - target)^2``, each averaged over all samples. Labels are 1 inside
    the ground-truth surface, 0 outside."""
    s = np.asarray(sigma, dtype=np.float64).ravel()
    lab = np.asarray(inside_labels, dtype=np.float64).ravel()
    o = np.asarray(visibility, dtype=np.float64).ravel()
    tgt = np.asarray(occlusion_targets, dtype=np.float64).ravel()
    if not (len(s) == len(lab) == len(o) == len(tgt)):
        raise ValueError("sample arrays differ in length")
    n = len(s)
    return float(((occupancy(s) - lab) ** 2).sum() / n + ((o - tgt) ** 2).sum() / n)


def occupancy_labels(mesh: TriMesh, points) -> np.ndarray:
    """1 inside the (watertight) mesh, 0 outside."""
    return (signs(mesh, points) > 0).astype(np.float64)
