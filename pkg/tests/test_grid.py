import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from humanfield.grid import (accel_closest_point, brute_closest_points, build_grid,
                             closest_points, shells)
from humanfield.mesh import MeshError, TriMesh


def lp_overlap(tri, lo, hi, tol=1e-12):
    """Does the triangle meet the closed box?  Feasibility LP over barycentrics."""
    A_ub = np.concatenate([tri.T, -tri.T])
    b_ub = np.concatenate([hi + tol, -(lo - tol)])
    res = linprog(np.zeros(3), A_ub=A_ub, b_ub=b_ub, A_eq=np.ones((1, 3)), b_eq=[1.0],
                  bounds=[(0, None)] * 3, method="highs")
    return res.status == 0


def test_single_triangle_spans_cells():
    m = TriMesh(np.array([[0, 0, 0], [3, 0, 0], [0, 0.1, 0.0]]), np.array([[0, 1, 2]]))
    g = build_grid(m, 3)
    assert len(g.occupied()) >= 3
    assert all(0 in g.faces_in(g.unflat(c)) for c in g.occupied())


def test_cube_binning_matches_lp_oracle(cube):
    g = build_grid(cube, 4)
    tris = cube.triangles()
    for ijk in itertools.product(*(range(d) for d in g.dims)):
        lo, hi = g.cell_box(ijk)
        want = {f for f in range(cube.n_faces) if lp_overlap(tris[f], lo, hi)}
        got = set(g.faces_in(ijk).tolist())
        # binning is conservative: nothing the oracle finds may be missing
        assert want <= got
        # and the inflation is tiny: extra faces only touch the box within 1e-6
        for f in got - want:
            assert lp_overlap(tris[f], lo - 1e-6, hi + 1e-6)
    # interior voxels of the cube stay empty
    inner = [ijk for ijk in itertools.product(*(range(d) for d in g.dims))
             if np.all(g.cell_box(ijk)[0] > -0.5 + 1e-9)
             and np.all(g.cell_box(ijk)[1] < 0.5 - 1e-9)]
    assert inner and all(len(g.faces_in(ijk)) == 0 for ijk in inner)


def test_grid_invariants(bumpy):
    g = build_grid(bumpy, 16)
    lo, hi = bumpy.bounds()
    glo, ghi = g.bounds()
    assert np.all(glo <= lo - g.cell_size + 1e-12) and np.all(ghi >= hi + g.cell_size - 1e-12)
    assert set(np.unique(g.cell_faces).tolist()) == set(range(bumpy.n_faces))
    for c in g.occupied()[:200]:
        fs = g.faces_in(g.unflat(c))
        assert np.all(np.diff(fs) > 0)


def test_voxel_of(sphere, rng):
    g = build_grid(sphere, 10)
    P = rng.uniform(-1, 1, (1000, 3))
    v = g.voxel_of(P)
    assert np.array_equal(v, np.floor((P - g.origin) / g.cell_size).astype(int))
    for p, ijk in zip(P[:50], v[:50]):
        lo, hi = g.cell_box(ijk)
        assert np.all(lo <= p) and np.all(p < hi)


def test_build_errors(cube):
    with pytest.raises(ValueError):
        build_grid(cube, 1)
    with pytest.raises(MeshError):
        build_grid(TriMesh(np.zeros((0, 3)), np.zeros((0, 3), int)))


def box_gap(a, b, cell):
    # brute box-to-box distance between voxels a and b
    d = np.maximum(np.abs(np.asarray(a) - np.asarray(b)) - 1, 0) * cell
    return float(np.sqrt((d ** 2).sum()))


def test_shells(sphere):
    g = build_grid(sphere, 12)
    seed = tuple(int(x) for x in g.unflat(int(g.occupied()[0])))
    out = list(shells(g, seed))
    assert out[0] == (seed, 0.0)
    lbs = [lb for _, lb in out]
    assert all(a <= b for a, b in zip(lbs, lbs[1:]))
    assert len(out) == len(g.occupied())
    for v, lb in out:
        assert abs(lb - box_gap(seed, v, g.cell_size)) < 1e-12
    for v, lb in out:
        if sum(abs(a - b) for a, b in zip(v, seed)) == 1:
            assert lb == 0.0
        if sorted(abs(a - b) for a, b in zip(v, seed)) == [0, 0, 3]:
            assert abs(lb - 2 * g.cell_size) < 1e-12
    with pytest.raises(ValueError):
        next(shells(g, (-1, 0, 0)))


def test_cube_center_tie(cube):
    f, b, p, d = accel_closest_point(build_grid(cube, 4), cube, [0, 0, 0])
    assert d == 0.5 and f == 0


def test_vertex_query(sphere):
    g = build_grid(sphere, 16)
    for vi in (0, 17, 300):
        f, b, p, d = accel_closest_point(g, sphere, sphere.vertices[vi])
        assert d == 0.0
        assert sorted(b.tolist()) == [0.0, 0.0, 1.0]
        assert sphere.faces[f][np.argmax(b)] == vi


def sample_queries(mesh, rng, n):
    lo, hi = mesh.bounds()
    pad = 0.3 * (hi - lo)
    a = rng.uniform(lo - pad, hi + pad, (n // 2, 3))
    # near-surface points
    from humanfield.mesh import sample_surface
    s, f = sample_surface(mesh, n - n // 2, seed=7)
    s = s + mesh.face_normals()[f] * rng.normal(scale=1e-3, size=(len(s), 1))
    return np.concatenate([a, s])


@pytest.mark.parametrize("name,res", [("cube", 4), ("sphere", 64), ("bumpy", 32), ("ring", 16)])
def test_exact_vs_brute(name, res, request, rng):
    mesh = request.getfixturevalue(name)
    P = sample_queries(mesh, rng, 10000)
    a = closest_points(mesh, P, build_grid(mesh, res))
    b = brute_closest_points(mesh, P)
    assert np.abs(a.distance - b.distance).max() <= 1e-9
    assert np.array_equal(a.face, b.face)


def test_far_points(sphere):
    P = np.array([[50.0, -20, 3], [0, 0, 1e3], [-1e4, 2, 2]])
    a = closest_points(sphere, P, build_grid(sphere, 8))
    b = brute_closest_points(sphere, P)
    assert np.array_equal(a.face, b.face) and np.array_equal(a.distance, b.distance)


def test_brute_force_tie_rule_oracle(cube, rng):
    # independent oracle: python loop with explicit lowest-index tie rule
    from humanfield.body import closest_point_on_triangle
    P = np.round(rng.uniform(-1, 1, (300, 3)) * 4) / 4  # many exact ties on the lattice
    res = closest_points(cube, P, build_grid(cube, 4))
    for p, f, d in zip(P, res.face, res.distance):
        ds = []
        for t in cube.triangles():
            _, q, _ = closest_point_on_triangle(p, *t)
            ds.append(np.linalg.norm(q - p))
        ds = np.array(ds)
        assert abs(ds.min() - d) < 1e-12
        assert f == np.nonzero(ds <= ds.min() + 1e-15)[0][0]


def test_max_distance_cutoff(bumpy, rng):
    g = build_grid(bumpy, 32)
    P = sample_queries(bumpy, rng, 4000)
    full = closest_points(bumpy, P, g)
    cut = closest_points(bumpy, P, g, max_distance=0.05)
    near = full.distance < 0.05
    assert np.array_equal(cut.face[near], full.face[near])
    assert np.all(cut.face[~near] == -1) and np.all(np.isinf(cut.distance[~near]))
