"""Procedural closed test meshes."""
import numpy as np

from .mesh import TriMesh


def box(lo=(-0.5, -0.5, -0.5), hi=(0.5, 0.5, 0.5)) -> TriMesh:
    """Axis-aligned box, 8 vertices and 12 outward-wound faces."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    v = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=np.float64)
    v = lo + v * (hi - lo)
    # vertex index = 4x + 2y + z
    f = np.array([
        [0, 1, 3], [0, 3, 2],  # x = lo
        [4, 6, 7], [4, 7, 5],  # x = hi
        [0, 4, 5], [0, 5, 1],  # y = lo
        [2, 3, 7], [2, 7, 6],  # y = hi
        [0, 2, 6], [0, 6, 4],  # z = lo
        [1, 5, 7], [1, 7, 3],  # z = hi
    ])
    return TriMesh(v, f)


def cube(size: float = 1.0, center=(0.0, 0.0, 0.0)) -> TriMesh:
    c = np.asarray(center, dtype=np.float64)
    return box(c - size / 2, c + size / 2)


def icosphere(subdivisions: int = 3, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Subdivided icosahedron: ``20 * 4**n`` faces, ``10 * 4**n + 2`` vertices."""
    t = (1.0 + 5 ** 0.5) / 2.0
    v = [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
         [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
         [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]]
    f = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
         [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
         [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
         [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    verts = [np.array(p, dtype=np.float64) / np.linalg.norm(p) for p in v]
    faces = f
    for _ in range(subdivisions):
        midpoint = {}

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in midpoint:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                midpoint[key] = len(verts) - 1
            return midpoint[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new
    V = np.array(verts) * radius + np.asarray(center, dtype=np.float64)
    return TriMesh(V, np.array(faces))


def torus(major: float = 1.0, minor: float = 0.35, n_major: int = 48, n_minor: int = 24,
          center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Torus around the z axis with ``2 * n_major * n_minor`` faces."""
    i, j = np.meshgrid(np.arange(n_major), np.arange(n_minor), indexing="ij")
    u = 2 * np.pi * i / n_major
    w = 2 * np.pi * j / n_minor
    r = major + minor * np.cos(w)
    V = np.stack([r * np.cos(u), r * np.sin(u), minor * np.sin(w)], -1).reshape(-1, 3)
    idx = lambda a, b: (a % n_major) * n_minor + (b % n_minor)  # noqa: E731
    a = idx(i, j)
    b = idx(i + 1, j)
    c = idx(i + 1, j + 1)
    d = idx(i, j + 1)
    F = np.concatenate([np.stack([a, b, c], -1).reshape(-1, 3),
                        np.stack([a, c, d], -1).reshape(-1, 3)])
    return TriMesh(V + np.asarray(center, dtype=np.float64), F)


def bumpy_sphere(subdivisions: int = 4, radius: float = 1.0, amplitude: float = 0.1,
                 seed: int = 0) -> TriMesh:
    """Icosphere with a smooth random radial displacement (star-shaped, closed)."""
    base = icosphere(subdivisions)
    rng = np.random.Generator(np.random.Philox(key=seed))
    dirs = rng.normal(size=(6, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    phase = rng.uniform(0, 2 * np.pi, 6)
    freq = rng.uniform(1.5, 4.0, 6)
    v = base.vertices
    bump = np.sin(freq * (v @ dirs.T) * np.pi + phase).mean(1)
    return TriMesh(v * (radius * (1 + amplitude * bump))[:, None], base.faces)
