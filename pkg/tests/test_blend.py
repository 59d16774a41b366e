import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from humanfield.blend import (AnalyticFeatureProvider, BlendQuery, ViewObservation,
                              assemble_views, attention_blend, attention_blend_batch, bilinear,
                              blend_weights, gt_occlusion_target, make_blend_stage,
                              occlusion_prior, sample_depth)
from humanfield.camera import DepthMap, look_at, rasterize_depth
from humanfield.shapes import icosphere


# ------------------------------------------------------------- occlusion

def test_sample_depth_uses_covered_neighbours_only():
    D = np.array([[1.0, np.inf], [3.0, 5.0]])
    dm = DepthMap(D)
    assert sample_depth(dm, [[1.0, 1.0]])[0] == pytest.approx((1 + 3 + 5) / 3)
    assert sample_depth(dm, [[0.5, 0.5]])[0] == 1.0
    assert np.isinf(sample_depth(DepthMap(np.full((2, 2), np.inf)), [[1.0, 1.0]])[0])


def test_occlusion_prior_examples():
    cam = look_at([0, 0, 3.0], width=16, height=16)
    dm = DepthMap(np.full(cam.shape, 3.0))  # a wall at view depth 3
    e = occlusion_prior(np.array([[0, 0, 0.5], [0, 0, 0.0], [0, 0, -0.5]]), cam, dm, 10.0)
    assert e[0] > 0.99 and e[1] == 0.5 and e[2] < 0.01
    # off-image and behind-camera points
    assert occlusion_prior([50.0, 0, 0], cam, dm) == 0.0
    assert occlusion_prior([0, 0, 4.0], cam, dm) == 0.0
    # no surface in the depth map: fully visible
    assert occlusion_prior([0, 0, 0.0], cam, DepthMap(np.full(cam.shape, np.inf))) == 1.0


def test_occlusion_sharpness_orders():
    cam = look_at([0, 0, 3.0], width=16, height=16)
    dm = DepthMap(np.full(cam.shape, 3.0))
    x = np.array([0, 0, 0.1])
    assert occlusion_prior(x, cam, dm, 5.0) < occlusion_prior(x, cam, dm, 50.0)


def test_gt_target_matches_prior_mechanics():
    cam = look_at([0, 0, 3.0], width=16, height=16)
    dm = DepthMap(np.linspace(2, 4, 256).reshape(16, 16))
    x = np.random.default_rng(0).uniform(-0.5, 0.5, (100, 3))
    assert np.array_equal(gt_occlusion_target(x, cam, dm, 20.0), occlusion_prior(x, cam, dm, 20.0))


def silhouette_pixel_distance(cam, P, radius=1.0):
    """Image distance (pixels) from each point's projection to the outline of
    a ball at the origin, for a camera looking at the origin."""
    uv, _ = cam.project(P)
    O, D = cam.pixel_rays(uv)
    d = np.linalg.norm(cam.center)
    ang = np.arccos(np.clip(np.einsum("ij,ij->i", -O, D) / d, -1, 1))
    return np.abs(ang - np.arcsin(radius / d)) * cam.fx


def test_sphere_near_far_hemispheres(rng):
    mesh = icosphere(4)
    cam = look_at([0, 0.5, 3.0], width=128, height=128)
    dm = rasterize_depth(mesh, cam)
    P = rng.normal(size=(20000, 3))
    P /= np.linalg.norm(P, axis=1, keepdims=True)
    view = cam.center - P
    facing = np.einsum("ij,ij->i", P, view) / np.linalg.norm(view, axis=1)
    # the 2x2 bilinear footprint cannot resolve depth within a pixel of the outline
    keep = silhouette_pixel_distance(cam, P) > 1.5
    e = occlusion_prior(P, cam, dm)
    agree = (e > 0.5) == (facing > 0)
    assert keep.mean() > 0.7
    assert agree[keep].mean() >= 0.99


# -------------------------------------------------------------- blending

def random_blend(rng, M=1000, V=5, dk=8):
    return (rng.normal(size=(M, dk)), rng.normal(size=(M, V, dk)), rng.random((M, V)),
            rng.random((M, V, 3)))


def test_weights_are_a_distribution(rng):
    Q, K, o, C = random_blend(rng, 10000)
    for mode in ("multiply", "log"):
        w, _ = blend_weights(Q, K, o, mode)
        assert np.all(w >= 0)
        assert np.abs(w.sum(1) - 1).max() < 1e-12
        out = attention_blend_batch(Q, K, o, C, mode)
        assert np.abs(out - np.einsum("mv,mvc->mc", w, C)).max() < 1e-12
        assert np.all(out >= C.min(1) - 1e-12) and np.all(out <= C.max(1) + 1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 7), st.integers(0, 2 ** 32 - 1), st.floats(0.1, 30.0))
def test_convex_combination_property(V, seed, scale):
    rng = np.random.default_rng(seed)
    Q, K, o, C = random_blend(rng, 20, V, 4)
    out = attention_blend_batch(Q * scale, K, o, C)
    w, _ = blend_weights(Q * scale, K, o)
    assert np.all(np.isfinite(out))
    assert np.all(out >= C.min(1) - 1e-12) and np.all(out <= C.max(1) + 1e-12)
    assert np.abs(out - np.einsum("mv,mvc->mc", w, C)).max() < 1e-12


def test_uniform_logits_give_mean(rng):
    _, K, o, C = random_blend(rng, 500, 6)
    out = attention_blend_batch(np.zeros((500, 8)), K, o, C)
    assert np.abs(out - C.mean(1)).max() < 1e-9


def test_virtual_only_returns_c0(rng):
    c0 = rng.random((300, 1, 3))
    Q, K, _, _ = random_blend(rng, 300, 1)
    assert np.array_equal(attention_blend_batch(Q, K, np.ones((300, 1)), c0), c0[:, 0])
    # real views fully occluded under the log gate
    Q, K, o, C = random_blend(rng, 300, 4)
    o[:, :3] = 0.0
    o[:, 3] = 1.0
    C[:, 3] = c0[:, 0]
    assert np.array_equal(attention_blend_batch(Q, K, o, C, "log"), c0[:, 0])


def test_multiply_gate_gives_occluded_views_neutral_logit():
    Q = np.ones((1, 4))
    K = np.ones((1, 2, 4)) * 10
    w, logits = blend_weights(Q, K, np.array([[0.0, 1.0]]))
    assert logits[0, 0] == 0.0 and logits[0, 1] == 20.0
    assert w[0, 0] > 0


def test_permutation_bit_exact(rng):
    Q, K, o, C = random_blend(rng, 2000, 6)
    ref = attention_blend_batch(Q, K, o, C)
    for _ in range(5):
        p = rng.permutation(6)
        assert np.array_equal(attention_blend_batch(Q, K[:, p], o[:, p], C[:, p]), ref)


def test_blend_input_errors(rng):
    Q, K, o, C = random_blend(rng, 3, 2)
    with pytest.raises(ValueError):
        blend_weights(Q[:, :4], K, o)
    with pytest.raises(ValueError):
        blend_weights(Q, K, o, "bogus")
    with pytest.raises(ValueError):
        blend_weights(Q, K[:, :0], o[:, :0])
    with pytest.raises(ValueError):
        attention_blend(BlendQuery(Q[0], np.zeros(3)), [])


def test_single_sample_api_matches_batch(rng):
    Q, K, o, C = random_blend(rng, 1, 3)
    views = [ViewObservation(C[0, v], o[0, v], K[0, v], np.zeros(3)) for v in range(3)]
    got = attention_blend(BlendQuery(Q[0], np.zeros(3)), views)
    assert np.array_equal(got, attention_blend_batch(Q, K, o, C)[0])


# -------------------------------------------------------------- assembly

def test_bilinear_exact_on_linear_images():
    H, W = 9, 12
    jj, ii = np.mgrid[:H, :W]
    img = np.stack([ii + 0.5, jj + 0.5, 2 * (ii + 0.5) - (jj + 0.5)], -1).astype(float)
    uv = np.random.default_rng(0).uniform([0.5, 0.5], [W - 0.5, H - 0.5], (200, 2))
    got = bilinear(img, uv)
    assert np.abs(got - np.stack([uv[:, 0], uv[:, 1], 2 * uv[:, 0] - uv[:, 1]], 1)).max() < 1e-12


def test_assemble_views_layout(rng):
    mesh = icosphere(2, radius=0.5)
    cams = [look_at([0, 0, 3.0], width=32, height=32), look_at([3.0, 0, 0], width=32, height=32)]
    imgs = [rng.random((32, 32, 3)) for _ in cams]
    deps = [rasterize_depth(mesh, c) for c in cams]
    X = np.array([[0, 0, 0.55], [0, 0, -0.55], [40.0, 0, 0]])
    c0 = rng.random((3, 3))
    Q, K, O, C, dirs = assemble_views(X, [0, 0, -1.0], cams, imgs, deps, c0)
    assert Q.shape == (3, 16) and K.shape == (3, 3, 16) and O.shape == (3, 3)
    assert np.all(O[:, 2] == 1) and np.array_equal(C[:, 2], c0)
    assert O[0, 0] > 0.5 and O[1, 0] < 0.5
    # the far point projects outside camera 0: invisible and black there
    assert O[2, 0] == 0 and not C[2, 0].any()
    assert np.allclose(np.linalg.norm(dirs, axis=-1), 1)
    with pytest.raises(ValueError):
        assemble_views(X, [0, 0, 1.0], cams, imgs[:1], deps, c0)


def test_provider_deterministic():
    a = AnalyticFeatureProvider(seed=3)
    b = AnalyticFeatureProvider(seed=3)
    x = np.random.default_rng(1).random((10, 3))
    assert np.array_equal(a.query(x, [0, 0, 1.0], np.zeros((10, 3))),
                          b.query(x, [0, 0, 1.0], np.zeros((10, 3))))
    assert not np.array_equal(a.projection, AnalyticFeatureProvider(seed=4).projection)


def test_blend_stage_leaves_empty_samples(rng):
    cam = look_at([0, 0, 3.0], width=16, height=16)
    stage = make_blend_stage([cam], [rng.random((16, 16, 3))],
                             [DepthMap(np.full((16, 16), np.inf))])
    x = rng.uniform(-0.2, 0.2, (10, 3))
    c0 = rng.random((10, 3))
    sigma = np.where(np.arange(10) < 5, 0.0, 1.0)
    out = stage(x, np.tile([0, 0, -1.0], (10, 1)), sigma, c0)
    assert np.array_equal(out[:5], c0[:5])
    assert not np.array_equal(out[5:], c0[5:])
