"""Occlusion-aware blending of observed views.

A point behind a sphere is hidden from the front camera, so that camera's
color (red) should not leak into it. The soft occlusion prior
gates each view before the attention weights are normalized.
Run: python3 demos/occlusion_blending.py
"""
import numpy as np

from humanfield import look_at, rasterize_depth
from humanfield.blend import assemble_views, attention_blend_batch, blend_weights
from humanfield.shapes import icosphere

mesh = icosphere(4, radius=0.5)
front = look_at([0, 0, 3.0], width=64, height=64)
side = look_at([3.0, 0, 0], width=64, height=64)
cams = [front, side]
depths = [rasterize_depth(mesh, c) for c in cams]
# each view is painted a flat color so its contribution is easy to read off
images = [np.tile([1.0, 0.0, 0.0], (64, 64, 1)), np.tile([0.0, 0.0, 1.0], (64, 64, 1))]

# just off the surface; exactly on it the prior is an even 0.5
# the side camera sees the first two points just past the ball's outline
X = np.array([[0.0, 0.0, 0.55],    # faces the front camera
              [0.0, 0.0, -0.55],   # behind the ball for the front camera
              [0.55, 0.0, 0.0]])   # faces the side camera
c0 = np.tile([0.0, 1.0, 0.0], (3, 1))  # green stands in for the virtual color
d = np.array([0.0, 0.0, -1.0])

Q, K, O, C, _ = assemble_views(X, d, cams, images, depths, c0)
for mode in ("multiply", "log"):
    w, _ = blend_weights(Q, K, O, mode)
    out = attention_blend_batch(Q, K, O, C, mode)
    print(f"gate = {mode}")
    for x, vis, wt, c in zip(X, O, w, out):
        print(f"  x={x}  visibility={np.round(vis, 3)}  weights={np.round(wt, 3)}"
              f"  rgb={np.round(c, 3)}")
