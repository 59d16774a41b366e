"""Screen-space occlusion and visibility-gated attention blending of views.

A sample's final color is a softmax-weighted mix of the colors observed
by the source cameras plus one extra "virtual" observation: the field's
own radiance ``c0``, always fully visible and seen along the query ray.
Logits are ``(Q . K_i) / sqrt(d_k)`` multiplied by the view's visibility
``o_i``; a fully occluded view therefore gets logit 0, not minus
infinity. The ``"log"`` mode adds ``log(o_i)`` instead, which does drive
occluded views to zero weight.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

from .camera import Camera, DepthMap
from .render import positional_encoding, spherical_harmonics

DEFAULT_SHARPNESS = 50.0
DEFAULT_KEY_WIDTH = 16
MODES = ("multiply", "log")


# ------------------------------------------------------------- occlusion

def sample_depth(depth: DepthMap, uv) -> np.ndarray:
    """Bilinear depth at image coordinates, using only covered neighbours.

    Returns ``inf`` where no covered neighbour has positive weight.
    """
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    D = depth.depth
    H, W = D.shape
    fx = uv[:, 0] - 0.5
    fy = uv[:, 1] - 0.5
    i0 = np.floor(fx).astype(np.int64)
    j0 = np.floor(fy).astype(np.int64)
    wx = fx - i0
    wy = fy - j0
    num = np.zeros(len(uv))
    den = np.zeros(len(uv))
    for di, dj, w in ((0, 0, (1 - wx) * (1 - wy)), (1, 0, wx * (1 - wy)),
                      (0, 1, (1 - wx) * wy), (1, 1, wx * wy)):
        i = i0 + di
        j = j0 + dj
        ok = (i >= 0) & (i < W) & (j >= 0) & (j < H)
        z = np.full(len(uv), np.inf)
        z[ok] = D[j[ok], i[ok]]
        use = ok & np.isfinite(z) & (w > 0)
        num[use] += w[use] * z[use]
        den[use] += w[use]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / den, np.inf)


def occlusion_prior(x, camera: Camera, depth: DepthMap, sharpness: float = DEFAULT_SHARPNESS):
    """Soft visibility ``sigmoid(k * (z_ref - z))`` of points from ``camera``.

    ``z`` is the point's view depth and ``z_ref`` the rasterized body depth
    at its projection. Points outside the image (or behind the camera) get
    0; pixels with no surface behave as ``z_ref = inf`` and give 1.
    """
    P = np.asarray(x, dtype=np.float64)
    single = P.ndim == 1
    P = P.reshape(-1, 3)
    uv, z = camera.project(P)
    inside = (z > 0) & (uv[:, 0] >= 0) & (uv[:, 0] < camera.width) \
        & (uv[:, 1] >= 0) & (uv[:, 1] < camera.height)
    e = np.zeros(len(P))
    zr = sample_depth(depth, uv[inside])
    with np.errstate(over="ignore"):
        e[inside] = np.where(np.isfinite(zr), expit(sharpness * (zr - z[inside])), 1.0)
    return float(e[0]) if single else e


def gt_occlusion_target(x, camera: Camera, gt_depth: DepthMap,
                        sharpness: float = DEFAULT_SHARPNESS):
    """Occlusion target from a ground-truth scan depth; same mechanics as the prior."""
    return occlusion_prior(x, camera, gt_depth, sharpness)


# -------------------------------------------------------------- blending

@dataclass(frozen=True)
class ViewObservation:
    color: np.ndarray
    visibility: float
    key: np.ndarray
    direction: np.ndarray


@dataclass(frozen=True)
class BlendQuery:
    feature: np.ndarray
    direction: np.ndarray


def blend_weights(query, keys, visibility, mode: str = "multiply"):
    """Softmax weights over views; arrays ``(M, dk)``, ``(M, V, dk)``, ``(M, V)``."""
    Q = np.asarray(query, dtype=np.float64)
    K = np.asarray(keys, dtype=np.float64)
    o = np.asarray(visibility, dtype=np.float64)
    if K.shape[-1] != Q.shape[-1]:
        raise ValueError(f"key width {K.shape[-1]} != query width {Q.shape[-1]}")
    if K.shape[-2] == 0:
        raise ValueError("no views to blend")
    logits = np.einsum("mk,mvk->mv", Q, K) / np.sqrt(Q.shape[-1])
    if mode == "multiply":
        logits = logits * o
    elif mode == "log":
        with np.errstate(divide="ignore"):
            logits = logits + np.log(o)
    else:
        raise ValueError(f"unknown blend mode {mode!r}; expected one of {MODES}")
    m = logits.max(-1, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(-1, keepdims=True), logits


def attention_blend_batch(query, keys, visibility, colors, mode: str = "multiply") -> np.ndarray:
    """Blend ``colors (M, V, 3)``.

    Views are put in a canonical order (by logit, then color) before the
    softmax sums, so permuting the input views gives bit-identical output.
    """
    Q = np.asarray(query, dtype=np.float64)
    K = np.asarray(keys, dtype=np.float64)
    o = np.asarray(visibility, dtype=np.float64)
    C = np.asarray(colors, dtype=np.float64)
    _, logits = blend_weights(Q, K, o, mode)
    order = np.lexsort((C[..., 2], C[..., 1], C[..., 0], logits), axis=-1)
    logits = np.take_along_axis(logits, order, -1)
    C = np.take_along_axis(C, order[..., None], -2)
    m = logits.max(-1, keepdims=True)
    e = np.exp(logits - m)
    w = e / e.sum(-1, keepdims=True)
    return np.einsum("mv,mvc->mc", w, C)


def attention_blend(query: BlendQuery, views: Sequence[ViewObservation],
                    mode: str = "multiply") -> np.ndarray:
    """Blend one sample's N real views plus the virtual view (last or anywhere)."""
    if not views:
        raise ValueError("empty view list")
    K = np.stack([v.key for v in views])[None]
    o = np.array([v.visibility for v in views])[None]
    C = np.stack([v.color for v in views])[None]
    return attention_blend_batch(np.asarray(query.feature)[None], K, o, C, mode)[0]


# ------------------------------------------------------ feature provider

class AnalyticFeatureProvider:
    """Deterministic stand-in for learned query/key networks.

    Encodes ``[PE(x), SH(d), feature]`` and projects it to ``d_k`` with a
    fixed Gaussian matrix drawn from a seeded Philox generator.
    """

    def __init__(self, d_k: int = DEFAULT_KEY_WIDTH, octaves: int = 10, sh_degree: int = 2,
                 feature_width: int = 3, seed: int = 0):
        self.d_k = d_k
        self.octaves = octaves
        self.sh_degree = sh_degree
        self.feature_width = feature_width
        n_in = 3 + 6 * octaves + (sh_degree + 1) ** 2 + feature_width
        rng = np.random.Generator(np.random.Philox(key=seed))
        self.projection = rng.normal(size=(n_in, d_k)) / np.sqrt(n_in)

    def encode(self, x, d, feature) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        d = np.broadcast_to(np.asarray(d, dtype=np.float64), x.shape)
        f = np.broadcast_to(np.asarray(feature, dtype=np.float64),
                            x.shape[:-1] + (self.feature_width,))
        z = np.concatenate([positional_encoding(x, self.octaves),
                            spherical_harmonics(d, self.sh_degree), f], -1)
        return z @ self.projection

    query = encode
    key = encode


def assemble_views(x, d, cameras: Sequence[Camera], images: Sequence[np.ndarray],
                   depths: Sequence[DepthMap], c0, feature=None,
                   provider: AnalyticFeatureProvider | None = None,
                   sharpness: float = DEFAULT_SHARPNESS):
    """Build the blend inputs for samples ``x (M, 3)`` seen along ``d (M, 3)``.

    Returns ``(Q, K, O, C, view_dirs)`` with ``N + 1`` views per sample;
    the last one is the virtual view carrying ``c0`` with visibility 1.
    Views whose projection leaves the image get visibility 0 and black.
    """
    if not (len(cameras) == len(images) == len(depths)):
        raise ValueError("cameras, images and depth maps must have equal counts")
    provider = provider or AnalyticFeatureProvider()
    X = np.asarray(x, dtype=np.float64).reshape(-1, 3)
    Dq = np.broadcast_to(np.asarray(d, dtype=np.float64), X.shape)
    c0 = np.broadcast_to(np.asarray(c0, dtype=np.float64), X.shape)
    M, N = len(X), len(cameras)
    cols = np.zeros((M, N + 1, 3))
    vis = np.ones((M, N + 1))
    dirs = np.zeros((M, N + 1, 3))
    for n, (cam, img, dep) in enumerate(zip(cameras, images, depths)):
        uv, z = cam.project(X)
        inside = (z > 0) & (uv[:, 0] >= 0) & (uv[:, 0] < cam.width) \
            & (uv[:, 1] >= 0) & (uv[:, 1] < cam.height)
        cols[inside, n] = bilinear(img, uv[inside])
        vis[:, n] = 0.0
        vis[inside, n] = occlusion_prior(X[inside], cam, dep, sharpness)
        v = X - cam.center
        dirs[:, n] = v / np.linalg.norm(v, axis=1, keepdims=True)
    cols[:, N] = c0
    dirs[:, N] = Dq
    if feature is None:
        feature = cols[:, :N]
    K = provider.key(np.repeat(X[:, None], N + 1, 1), dirs,
                     np.concatenate([feature, c0[:, None]], 1))
    wsum = vis[:, :N].sum(1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        pooled = np.where(wsum > 0, (vis[:, :N, None] * feature).sum(1) / np.maximum(wsum, 1e-300),
                          c0)
    Q = provider.query(X, Dq, pooled)
    return Q, K, vis, cols, dirs


def bilinear(image: np.ndarray, uv) -> np.ndarray:
    """Bilinear lookup with pixel centers at half-integers and edge clamping."""
    img = np.asarray(image, dtype=np.float64)
    H, W = img.shape[:2]
    fx = np.clip(uv[:, 0] - 0.5, 0, W - 1)
    fy = np.clip(uv[:, 1] - 0.5, 0, H - 1)
    i0 = np.minimum(np.floor(fx).astype(np.int64), W - 2 if W > 1 else 0)
    j0 = np.minimum(np.floor(fy).astype(np.int64), H - 2 if H > 1 else 0)
    i1 = np.minimum(i0 + 1, W - 1)
    j1 = np.minimum(j0 + 1, H - 1)
    wx = (fx - i0)[:, None]
    wy = (fy - j0)[:, None]
    return ((1 - wx) * (1 - wy) * img[j0, i0] + wx * (1 - wy) * img[j0, i1]
            + (1 - wx) * wy * img[j1, i0] + wx * wy * img[j1, i1])


def make_blend_stage(cameras, images, depths, provider=None, sharpness=DEFAULT_SHARPNESS,
                     mode: str = "multiply"):
    """Per-sample color stage for :func:`humanfield.render.render_image`."""
    provider = provider or AnalyticFeatureProvider()

    def stage(points, dirs, sigma, c0, feature=None):
        out = np.array(c0, dtype=np.float64, copy=True)
        live = np.nonzero(sigma > 0)[0]
        if len(live):
            Q, K, O, C, _ = assemble_views(points[live], dirs[live], cameras, images, depths,
                                           c0[live], None, provider, sharpness)
            out[live] = attention_blend_batch(Q, K, O, C, mode)
        return out

    return stage
