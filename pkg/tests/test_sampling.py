import numpy as np
import pytest

from humanfield.camera import look_at
from humanfield.sampling import (SampleFlag, classify_points, counter_uniform, default_dilation,
                                 dilate_mask, disk, hull_interval, make_ray_batch, ray_bounds,
                                 sample_free_space, stratified_samples)
from humanfield.shapes import icosphere


def cone_mask(cam, center, radius):
    """Analytic silhouette of a ball: pixel rays inside its tangent cone."""
    O, D = cam.pixel_rays()
    v = np.asarray(center) - O
    dist = np.linalg.norm(v, axis=1)
    cosang = np.einsum("ij,ij->i", v, D) / dist
    return (cosang >= np.sqrt(1 - (radius / dist) ** 2)).reshape(cam.shape)


def ring_cameras(n=4, dist=3.0, size=64):
    cams = []
    for k in range(n):
        a = 2 * np.pi * k / n
        cams.append(look_at([dist * np.cos(a), 0.4 * (k % 2), dist * np.sin(a)],
                            width=size, height=size))
    return cams


# ------------------------------------------------------------------ rng

def test_counter_uniform_open_interval_and_order_free():
    u = counter_uniform(7, 1, np.arange(1000)[:, None], np.arange(64)[None])
    assert u.shape == (1000, 64)
    assert u.min() > 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 0.01
    # any subset, any order
    idx = np.array([999, 3, 500])
    assert np.array_equal(counter_uniform(7, 1, idx[:, None], np.arange(64)[None]), u[idx])


def test_counter_uniform_streams_and_seeds_differ():
    a = counter_uniform(0, 1, np.arange(100))
    assert not np.array_equal(a, counter_uniform(0, 2, np.arange(100)))
    assert not np.array_equal(a, counter_uniform(1, 1, np.arange(100)))
    assert np.array_equal(a, counter_uniform(2 ** 64, 1, np.arange(100)))


# ---------------------------------------------------------------- masks

def test_disk_shape():
    d = disk(6)
    assert d.shape == (13, 13)
    assert d[6].all() and d[:, 6].all()
    assert not d[0, 0]


def test_dilation_matches_distance_oracle(rng):
    m = rng.random((40, 50)) < 0.02
    for r in (0, 1, 3, 6):
        got = dilate_mask(m, r)
        fy, fx = np.nonzero(m)
        yy, xx = np.mgrid[:40, :50]
        d2 = (yy[..., None] - fy) ** 2 + (xx[..., None] - fx) ** 2
        assert np.array_equal(got, (d2 <= r * r).any(-1))


def test_single_pixel_dilates_to_13_pixel_disk():
    m = np.zeros((31, 31), bool)
    m[15, 15] = True
    d = dilate_mask(m, 6)
    ys, xs = np.nonzero(d)
    assert xs.max() - xs.min() + 1 == 13 and ys.max() - ys.min() + 1 == 13
    assert np.array_equal(d[9:22, 9:22], disk(6))


def test_dilation_rejects_negative():
    with pytest.raises(ValueError):
        dilate_mask(np.ones((3, 3)), -1)


def test_default_dilation_scales_with_image():
    assert default_dilation(look_at([0, 0, 3], width=512, height=512)) == 14
    assert default_dilation(look_at([0, 0, 3], width=64, height=64)) == 2


# ------------------------------------------------------------- classify

def test_classify_matches_per_point_loop(rng):
    cams = ring_cameras(3)
    masks = [rng.random(c.shape) < 0.7 for c in cams]
    P = rng.uniform(-1.5, 1.5, (3000, 3))
    got = classify_points(P, cams, masks)
    want = np.ones(len(P), bool)
    for cam, m in zip(cams, masks):
        for n, p in enumerate(P):
            pc = cam.rotation @ p + cam.translation
            if pc[2] <= 0:
                want[n] = False
                continue
            u = cam.fx * pc[0] / pc[2] + cam.cx
            v = cam.fy * pc[1] / pc[2] + cam.cy
            i, j = int(np.floor(u)), int(np.floor(v))
            if not (0 <= i < cam.width and 0 <= j < cam.height) or not m[j, i]:
                want[n] = False
    assert np.array_equal(got, want)


def test_classify_behind_camera_is_outside():
    cam = look_at([0, 0, 3])
    m = np.ones(cam.shape, bool)
    assert not classify_points(np.array([[0.0, 0.0, 4.0]]), [cam], [m])[0]
    assert classify_points(np.array([[0.0, 0.0, 0.0]]), [cam], [m])[0]


def test_classify_shape_errors():
    cam = look_at([0, 0, 3])
    with pytest.raises(ValueError):
        classify_points(np.zeros((1, 3)), [cam], [])
    with pytest.raises(ValueError):
        classify_points(np.zeros((1, 3)), [cam], [np.ones((5, 5), bool)])


def test_sphere_hull_matches_analytic_cones(rng):
    cams = ring_cameras(4)
    r = 0.6
    masks = [dilate_mask(cone_mask(c, [0, 0, 0], r), default_dilation(c)) for c in cams]
    P = rng.uniform(-1.2, 1.2, (20000, 3))
    got = classify_points(P, cams, masks)
    # analytic: inside every tangent cone; band of two dilation radii in angle
    inside = np.ones(len(P), bool)
    band = np.zeros(len(P), bool)
    for cam in cams:
        v = -cam.center
        w = P - cam.center
        ang = np.arccos(np.clip(w @ v / np.linalg.norm(w, axis=1) / np.linalg.norm(v), -1, 1))
        half = np.arcsin(r / np.linalg.norm(v))
        pix = 2 * default_dilation(cam) / cam.fx + 1.5 / cam.fx
        inside &= ang <= half
        band |= np.abs(ang - half) < pix
    assert np.array_equal(got[~band], inside[~band])
    assert (~band).sum() > 5000


# --------------------------------------------------------------- bounds

def test_ray_bounds_matches_plane_clip_oracle(rng):
    lo, hi = np.array([-1.0, -0.5, -0.2]), np.array([1.0, 0.5, 0.3])
    O = rng.uniform(-3, 3, (2000, 3))
    D = rng.normal(size=(2000, 3))
    D /= np.linalg.norm(D, axis=1, keepdims=True)
    tn, tf, hit = ray_bounds(O, D, (lo, hi), pad=0.0)
    for n in range(len(O)):
        # oracle: intersect with the six planes, keep points on the box
        ts = []
        for ax in range(3):
            for b in (lo[ax], hi[ax]):
                if D[n, ax] != 0:
                    t = (b - O[n, ax]) / D[n, ax]
                    p = O[n] + t * D[n]
                    if np.all(p >= lo - 1e-9) and np.all(p <= hi + 1e-9):
                        ts.append(t)
        ts = [t for t in ts if t > 0]
        inside0 = np.all(O[n] >= lo) and np.all(O[n] <= hi)
        if inside0:
            assert hit[n] and tn[n] == 1e-6
            assert abs(tf[n] - max(ts)) < 1e-9
        elif ts:
            assert hit[n]
            assert abs(tn[n] - min(ts)) < 1e-9 and abs(tf[n] - max(ts)) < 1e-9
        else:
            assert not hit[n]


def test_ray_bounds_axis_parallel():
    box = (np.array([-1.0, -1, -1]), np.array([1.0, 1, 1]))
    tn, tf, hit = ray_bounds([[0, 0, -5], [0, 3, -5]], [[0, 0, 1], [0, 0, 1]], box, pad=0.0)
    assert hit.tolist() == [True, False]
    assert tn[0] == 4.0 and tf[0] == 6.0


def test_ray_bounds_padding_uses_diagonal():
    box = (np.zeros(3), np.ones(3))
    tn, tf, _ = ray_bounds([[0.5, 0.5, -5]], [[0, 0, 1]], box, pad=0.05)
    p = 0.05 * np.sqrt(3)
    assert abs(tn[0] - (5 - p)) < 1e-12 and abs(tf[0] - (6 + p)) < 1e-12


# ------------------------------------------------------------ samplers

def test_stratified_one_per_bin():
    t = stratified_samples(np.array([1.0, 2.0]), np.array([3.0, 2.5]), 64, seed=3)
    for row, (a, b) in zip(t, [(1.0, 3.0), (2.0, 2.5)]):
        edges = a + np.arange(65) / 64 * (b - a)
        assert np.all(row >= edges[:-1]) and np.all(row < edges[1:])
    c = stratified_samples(0.0, 1.0, 4, jitter=False)
    assert np.allclose(c, [0.125, 0.375, 0.625, 0.875])


def test_stratified_keyed_by_ray_index():
    a = stratified_samples(np.zeros(10), np.ones(10), 8, seed=1)
    b = stratified_samples(np.zeros(3), np.ones(3), 8, seed=1, ray_index=[9, 0, 4])
    assert np.array_equal(b, a[[9, 0, 4]])


def test_stratified_rejects_bad_input():
    with pytest.raises(ValueError):
        stratified_samples(1.0, 1.0, 8)
    with pytest.raises(ValueError):
        stratified_samples(0.0, 1.0, 1)


def test_hull_interval_covers_inside_probes_and_shrinks_with_masks():
    cams = ring_cameras(4)
    O, D = cams[0].pixel_rays()
    box = (np.full(3, -1.0), np.full(3, 1.0))
    tn, tf, hit = ray_bounds(O, D, box)
    big = [cone_mask(c, [0, 0, 0], 0.7) for c in cams]
    small = [cone_mask(c, [0, 0, 0], 0.4) for c in cams]
    n0, f0, h0 = hull_interval(O[hit], D[hit], tn[hit], tf[hit], cams, big)
    n1, f1, h1 = hull_interval(O[hit], D[hit], tn[hit], tf[hit], cams, small)
    # smaller masks: fewer rays, each interval nested in the larger one
    assert np.all(h0[h1])
    assert np.all(n1[h1] >= n0[h1] - 1e-12) and np.all(f1[h1] <= f0[h1] + 1e-12)
    # every inside probe point lies inside the returned interval
    ts = (np.arange(128) + 0.5) / 128
    tt = tn[hit][:, None] + ts * (tf - tn)[hit][:, None]
    inside = classify_points(O[hit][:, None] + tt[..., None] * D[hit][:, None], cams, big)
    assert not inside[~h0].any()
    assert np.all((tt >= n0[:, None]) | ~inside)
    assert np.all((tt <= f0[:, None]) | ~inside)
    assert h0.sum() > 100


def test_ray_batch_flags_and_valid_fraction():
    cams = ring_cameras(4)
    masks = [dilate_mask(cone_mask(c, [0, 0, 0], 0.5), 1) for c in cams]
    O, D = cams[0].pixel_rays()
    box = (np.full(3, -1.0), np.full(3, 1.0))
    free = make_ray_batch(O, D, box, 64, seed=0)
    hull = make_ray_batch(O, D, box, 64, seed=0, cameras=cams, masks=masks)
    assert np.all(free.flags[free.alive] == SampleFlag.VALID)
    inside = classify_points(hull.points[hull.alive], cams, masks)
    assert np.array_equal(hull.flags[hull.alive] == SampleFlag.VALID, inside)
    assert not hull.alive[~free.alive].any()


def test_free_space_points_are_outside_hull():
    box = (np.full(3, -1.0), np.full(3, 1.0))
    ball = lambda p: np.linalg.norm(p, axis=1) < 0.8  # noqa: E731
    pts, ok = sample_free_space(box, ball, 500, seed=2)
    assert ok and pts.shape == (500, 3)
    assert not ball(pts).any()
    again, _ = sample_free_space(box, ball, 500, seed=2)
    assert np.array_equal(pts, again)


def test_free_space_budget_warns():
    box = (np.full(3, -1.0), np.full(3, 1.0))
    with pytest.warns(RuntimeWarning):
        pts, ok = sample_free_space(box, lambda p: np.ones(len(p), bool), 10, max_rounds=3)
    assert not ok and len(pts) == 0


def test_ray_bounds_accepts_mesh():
    m = icosphere(1)
    tn, tf, hit = ray_bounds([[0, 0, -5]], [[0, 0, 1]], m, pad=0.0)
    lo, hi = m.bounds()
    assert hit[0] and abs(tn[0] - (5 + lo[2])) < 1e-12 and abs(tf[0] - (5 + hi[2])) < 1e-12
