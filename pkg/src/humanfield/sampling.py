"""Ray generation support: visual-hull masks, ray bounds and sample placement.

Randomness comes from a stateless counter-based generator: the value for
``(seed, stream, ray, sample)`` is a SplitMix64 hash of those integers,
so any subset of rays can be sampled in any order with identical results.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from .camera import Camera
from .mesh import TriMesh

BOUNDS_PAD = 0.05
T_NEAR_MIN = 1e-6
DILATION_FRACTION = 0.02

STREAM_STRATIFIED = 1
STREAM_FREE_SPACE = 2

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


class SampleFlag(enum.IntEnum):
    VALID = 0
    OUTSIDE_HULL = 1
    FREE_SPACE = 2


# ------------------------------------------------------------------ RNG

def _splitmix(z: np.ndarray) -> np.ndarray:
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def counter_uniform(seed: int, stream: int, *counters) -> np.ndarray:
    """Uniform doubles in the open interval (0, 1) keyed by integer counters.

    Counters broadcast against each other like numpy arrays.
    """
    with np.errstate(over="ignore"):
        h = _splitmix(np.uint64(seed % 2 ** 64) ^ _splitmix(np.uint64(stream)))
        for c in counters:
            c = np.asarray(c).astype(np.uint64)
            h = _splitmix(h ^ _splitmix(c))
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


# ---------------------------------------------------------------- masks

def disk(radius: int) -> np.ndarray:
    r = int(radius)
    y, x = np.mgrid[-r:r + 1, -r:r + 1]
    return x * x + y * y <= r * r


def dilate_mask(mask: np.ndarray, radius: int) -> np.ndarray:
    """Binary dilation by a disk of the given pixel radius."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    mask = np.asarray(mask, dtype=bool)
    if radius == 0:
        return mask.copy()
    return ndimage.binary_dilation(mask, structure=disk(radius))


def default_dilation(camera: Camera) -> int:
    return int(round(DILATION_FRACTION * np.hypot(camera.width, camera.height)))


def classify_points(points, cameras: Sequence[Camera], masks: Sequence[np.ndarray]) -> np.ndarray:
    """True where a point projects into the foreground of every mask.

    Points behind a camera or outside its image count as outside that mask.
    """
    if len(cameras) != len(masks):
        raise ValueError(f"{len(cameras)} cameras but {len(masks)} masks")
    P = np.asarray(points, dtype=np.float64)
    shape = P.shape[:-1]
    P = P.reshape(-1, 3)
    inside = np.ones(len(P), dtype=bool)
    for cam, m in zip(cameras, masks):
        if m.shape != (cam.height, cam.width):
            raise ValueError(f"mask shape {m.shape} does not match camera {cam.shape}")
        uv, z = cam.project(P)
        ok = z > 0
        with np.errstate(invalid="ignore"):
            i = np.floor(np.where(ok, uv[:, 0], -1)).astype(np.int64)
            j = np.floor(np.where(ok, uv[:, 1], -1)).astype(np.int64)
        ok &= (i >= 0) & (i < cam.width) & (j >= 0) & (j < cam.height)
        hit = np.zeros(len(P), dtype=bool)
        hit[ok] = m[j[ok], i[ok]]
        inside &= hit
    return inside.reshape(shape)


def classify_point(x, cameras, dilated_masks) -> bool:
    return bool(classify_points(np.asarray(x, dtype=np.float64)[None], cameras, dilated_masks)[0])


# --------------------------------------------------------------- bounds

def padded_box(lo, hi, pad: float = BOUNDS_PAD):
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    p = pad * np.linalg.norm(hi - lo)
    return lo - p, hi + p


def ray_bounds(origins, directions, box, pad: float = BOUNDS_PAD):
    """Slab-clip rays against a padded box.

    ``box`` is a mesh (its bounding box is used) or a ``(lo, hi)`` pair.
    Returns ``(t_near, t_far, hit)``; ``t_near`` is clamped to >= 1e-6.
    """
    lo, hi = box.bounds() if isinstance(box, TriMesh) else box
    lo, hi = padded_box(lo, hi, pad)
    O = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    D = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / D
        a = (lo - O) * inv
        b = (hi - O) * inv
    tmin = np.minimum(a, b)
    tmax = np.maximum(a, b)
    # axis-parallel rays: inside the slab -> unbounded, outside -> empty
    par = D == 0
    inslab = (O >= lo) & (O <= hi)
    tmin = np.where(par, np.where(inslab, -np.inf, np.inf), tmin)
    tmax = np.where(par, np.where(inslab, np.inf, -np.inf), tmax)
    tn = np.maximum(tmin.max(1), T_NEAR_MIN)
    tf = tmax.min(1)
    hit = tf > tn
    return np.where(hit, tn, 0.0), np.where(hit, tf, 0.0), hit


def stratified_samples(t_near, t_far, count: int, seed: int = 0, ray_index=None,
                       jitter: bool = True) -> np.ndarray:
    """One depth per equal sub-interval of ``[t_near, t_far]``.

    Works on a single interval or arrays of them (one row per ray).
    ``jitter=False`` places each sample at its bin center.
    """
    if count < 2:
        raise ValueError("count must be >= 2")
    tn = np.atleast_1d(np.asarray(t_near, dtype=np.float64))
    tf = np.atleast_1d(np.asarray(t_far, dtype=np.float64))
    if np.any(~(tf > tn)):
        raise ValueError("invalid interval: need t_far > t_near")
    if ray_index is None:
        ray_index = np.arange(len(tn))
    k = np.arange(count)
    if jitter:
        u = counter_uniform(seed, STREAM_STRATIFIED, np.asarray(ray_index)[:, None], k[None, :])
    else:
        u = np.full((len(tn), count), 0.5)
    t = tn[:, None] + (k[None, :] + u) / count * (tf - tn)[:, None]
    return t[0] if np.ndim(t_near) == 0 else t


def hull_interval(origins, directions, t_near, t_far, cameras, masks, probes: int = 128):
    """Tighten ``[t_near, t_far]`` to the span where a ray is inside the hull.

    The ray is probed at ``probes`` bin centers; the returned interval runs
    from the bin before the first inside probe to the bin after the last
    one. Rays with no inside probe are reported as misses.
    """
    O = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    D = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    tn = np.asarray(t_near, dtype=np.float64)
    tf = np.asarray(t_far, dtype=np.float64)
    h = (tf - tn) / probes
    ts = tn[:, None] + (np.arange(probes) + 0.5)[None, :] * h[:, None]
    inside = classify_points(O[:, None, :] + ts[..., None] * D[:, None, :], cameras, masks)
    any_in = inside.any(1)
    first = np.argmax(inside, 1)
    last = probes - 1 - np.argmax(inside[:, ::-1], 1)
    new_n = np.maximum(tn + (first - 1) * h, tn)
    new_f = np.minimum(tn + (last + 2) * h, tf)
    return np.where(any_in, new_n, 0.0), np.where(any_in, new_f, 0.0), any_in


# ------------------------------------------------------------- ray batch

@dataclass
class RayBatch:
    origins: np.ndarray     # (R, 3)
    directions: np.ndarray  # (R, 3) unit
    t_near: np.ndarray      # (R,)
    t_far: np.ndarray       # (R,)
    alive: np.ndarray       # (R,) rays with a non-empty interval
    depths: np.ndarray      # (R, N), rows of dead rays are zero
    flags: np.ndarray       # (R, N) SampleFlag values

    @property
    def points(self) -> np.ndarray:
        return self.origins[:, None, :] + self.depths[..., None] * self.directions[:, None, :]


def make_ray_batch(origins, directions, box, n_samples: int, seed: int = 0, cameras=None,
                   masks=None, ray_offset: int = 0, jitter: bool = True,
                   hull_probes: int = 128, pad: float = BOUNDS_PAD) -> RayBatch:
    """Bounded, stratified samples for a batch of rays.

    With ``cameras``/``masks`` (already dilated) the interval is tightened to
    the visual hull and every sample outside it is flagged ``OUTSIDE_HULL``.
    ``ray_offset`` is the global index of the first ray, which keys the RNG.
    """
    O = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    D = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    tn, tf, alive = ray_bounds(O, D, box, pad)
    use_hull = cameras is not None
    if use_hull:
        hn, hf, hin = hull_interval(O[alive], D[alive], tn[alive], tf[alive], cameras, masks,
                                    hull_probes)
        tn[alive], tf[alive] = hn, hf
        alive[np.nonzero(alive)[0][~hin]] = False
    R = len(O)
    depths = np.zeros((R, n_samples))
    flags = np.full((R, n_samples), SampleFlag.OUTSIDE_HULL, dtype=np.int8)
    idx = np.nonzero(alive)[0]
    if len(idx):
        depths[idx] = stratified_samples(tn[idx], tf[idx], n_samples, seed, idx + ray_offset,
                                         jitter)
        if use_hull:
            inside = classify_points(O[idx, None, :] + depths[idx, :, None] * D[idx, None, :],
                                     cameras, masks)
            flags[idx] = np.where(inside, SampleFlag.VALID, SampleFlag.OUTSIDE_HULL)
        else:
            flags[idx] = SampleFlag.VALID
    return RayBatch(O, D, tn, tf, alive, depths, flags)


def sample_free_space(box, inside_hull, count: int, seed: int = 0, max_rounds: int = 64,
                      batch_index: int = 0):
    """Rejection-sample ``count`` points in the padded box but outside the hull.

    ``inside_hull`` maps an ``(n, 3)`` array to booleans. Returns
    ``(points, complete)``; ``complete`` is False (with a warning) when the
    rejection budget ran out before ``count`` points were accepted.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    if count == 0:
        return np.zeros((0, 3)), True
    lo, hi = box.bounds() if isinstance(box, TriMesh) else box
    lo, hi = padded_box(lo, hi)
    got = []
    n_got = 0
    for rnd in range(max_rounds):
        cidx = rnd * count + np.arange(count)
        u = counter_uniform(seed, STREAM_FREE_SPACE, batch_index, cidx[:, None], np.arange(3))
        cand = lo + u * (hi - lo)
        keep = cand[~np.asarray(inside_hull(cand), dtype=bool)]
        got.append(keep[:count - n_got])
        n_got += len(got[-1])
        if n_got == count:
            return np.concatenate(got), True
    warnings.warn(f"free-space sampling accepted {n_got}/{count} points", RuntimeWarning,
                  stacklevel=2)
    return np.concatenate(got), False
