"""Indexed triangle meshes: container, OBJ/PLY I/O and topology checks."""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

DEGENERATE_AREA = 1e-12


class MeshError(ValueError):
    """Malformed mesh file or mesh data."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Triangle mesh with an optional canonical-pose vertex buffer.

    ``canonical_vertices`` shares the face list: face ``i`` of the posed
    mesh and face ``i`` of the canonical mesh are the same triangle.
    """

    vertices: np.ndarray
    faces: np.ndarray
    canonical_vertices: Optional[np.ndarray] = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            bad = np.nonzero((f < 0).any(1) | (f >= len(v)).any(1))[0]
            raise MeshError(
                f"face index out of range for {len(v)} vertices in faces {bad[:10].tolist()}")
        object.__setattr__(self, "vertices", _readonly(v))
        object.__setattr__(self, "faces", _readonly(f))
        if self.canonical_vertices is not None:
            cv = np.asarray(self.canonical_vertices, dtype=np.float64).reshape(-1, 3)
            if len(cv) != len(v):
                raise MeshError(
                    f"canonical vertex count {len(cv)} != posed vertex count {len(v)}")
            object.__setattr__(self, "canonical_vertices", _readonly(cv))

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def triangles(self) -> np.ndarray:
        return self.vertices[self.faces]

    def face_areas(self) -> np.ndarray:
        if "areas" not in self._cache:
            tri = self.triangles()
            cr = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
            self._cache["areas"] = 0.5 * np.linalg.norm(cr, axis=1)
        return self._cache["areas"]

    def face_normals(self) -> np.ndarray:
        """Unit normals following the right-hand winding of each face."""
        if "normals" not in self._cache:
            tri = self.triangles()
            cr = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
            n = np.linalg.norm(cr, axis=1, keepdims=True)
            self._cache["normals"] = cr / np.where(n > 0, n, 1.0)
        return self._cache["normals"]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(0), self.vertices.max(0)

    def diagonal(self) -> float:
        lo, hi = self.bounds()
        return float(np.linalg.norm(hi - lo))

    def degenerate_faces(self, tol: float = DEGENERATE_AREA) -> np.ndarray:
        return np.nonzero(self.face_areas() < tol)[0]

    def transformed(self, rotation, translation=(0.0, 0.0, 0.0), scale: float = 1.0) -> "TriMesh":
        """Apply ``x -> scale * R x + t`` to the posed vertices only."""
        R = np.asarray(rotation, dtype=np.float64)
        v = scale * self.vertices @ R.T + np.asarray(translation, dtype=np.float64)
        return TriMesh(v, self.faces, self.canonical_vertices)

    def with_canonical(self, canonical: "TriMesh | np.ndarray") -> "TriMesh":
        """Attach a canonical vertex buffer; a mesh argument must share the face list."""
        if isinstance(canonical, TriMesh):
            if canonical.faces.shape != self.faces.shape or not np.array_equal(
                    canonical.faces, self.faces):
                raise MeshError("canonical mesh face list does not match the posed mesh")
            canonical = canonical.vertices
        return TriMesh(self.vertices, self.faces, canonical)


def check_degenerate(mesh: TriMesh, tol: float = DEGENERATE_AREA) -> TriMesh:
    bad = mesh.degenerate_faces(tol)
    if len(bad):
        raise MeshError(f"degenerate faces (area < {tol:g}): {bad[:20].tolist()}"
                        + (" ..." if len(bad) > 20 else ""))
    return mesh


def drop_degenerate(mesh: TriMesh, tol: float = DEGENERATE_AREA) -> TriMesh:
    keep = mesh.face_areas() >= tol
    return TriMesh(mesh.vertices, mesh.faces[keep], mesh.canonical_vertices)


# --------------------------------------------------------------------------- I/O

def load_mesh(path: str | os.PathLike, canonical_path: str | os.PathLike | None = None) -> TriMesh:
    """Read an OBJ or PLY file (ascii or binary little-endian).

    Vertex order is kept as in the file. Degenerate faces raise
    :class:`MeshError`. A ``canonical_path`` mesh must have the identical
    face list and is attached as the canonical vertex buffer.
    """
    path = os.fspath(path)
    ext = os.path.splitext(path)[1].lower()
    if ext == ".obj":
        v, f = _read_obj(path)
    elif ext == ".ply":
        v, f = _read_ply(path)
    else:
        raise MeshError(f"{path}: unsupported mesh format {ext!r}")
    mesh = check_degenerate(TriMesh(v, f))
    if canonical_path is not None:
        mesh = mesh.with_canonical(load_mesh(canonical_path))
    return mesh


def _read_obj(path):
    verts, faces = [], []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            try:
                if parts[0] == "v":
                    verts.append([float(p) for p in parts[1:4]])
                    if len(verts[-1]) != 3:
                        raise ValueError("vertex needs 3 coordinates")
                elif parts[0] == "f":
                    idx = []
                    for p in parts[1:]:
                        i = int(p.split("/")[0])
                        idx.append(i - 1 if i > 0 else len(verts) + i)
                    if len(idx) < 3:
                        raise ValueError("face needs at least 3 vertices")
                    for k in range(1, len(idx) - 1):
                        faces.append([idx[0], idx[k], idx[k + 1]])
            except ValueError as exc:
                raise MeshError(f"{path}:{lineno}: {exc}") from None
    return (np.array(verts, dtype=np.float64).reshape(-1, 3),
            np.array(faces, dtype=np.int64).reshape(-1, 3))


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _read_ply(path):
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise MeshError(f"{path}: offset 0: not a PLY file")
    body_start = data.index(b"\n", end) + 1
    header = data[:end].decode("ascii", errors="replace").splitlines()
    fmt = None
    elements = []  # (name, count, [(prop, dtype, list_count_dtype)])
    for ln in header[1:]:
        tok = ln.split()
        if not tok:
            continue
        if tok[0] == "format":
            fmt = tok[1]
        elif tok[0] == "element":
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if not elements:
                raise MeshError(f"{path}: property before element in header")
            if tok[1] == "list":
                elements[-1][2].append((tok[4], _PLY_TYPES[tok[3]], _PLY_TYPES[tok[2]]))
            else:
                elements[-1][2].append((tok[2], _PLY_TYPES[tok[1]], None))
    if fmt not in ("ascii", "binary_little_endian"):
        raise MeshError(f"{path}: unsupported PLY format {fmt!r}")
    verts = faces = None
    if fmt == "ascii":
        lines = data[body_start:].decode("ascii", errors="replace").splitlines()
        pos = 0
        for name, count, props in elements:
            rows = []
            for _ in range(count):
                while pos < len(lines) and not lines[pos].strip():
                    pos += 1
                if pos >= len(lines):
                    raise MeshError(f"{path}: unexpected end of data in element {name!r}")
                tok = lines[pos].split()
                pos += 1
                try:
                    rec, k = {}, 0
                    for pname, dt, ldt in props:
                        if ldt is None:
                            rec[pname] = float(tok[k])
                            k += 1
                        else:
                            n = int(tok[k])
                            rec[pname] = [int(x) for x in tok[k + 1:k + 1 + n]]
                            k += 1 + n
                except (ValueError, IndexError):
                    raise MeshError(f"{path}: bad {name} record near body line {pos}") from None
                rows.append(rec)
            if name == "vertex":
                verts = np.array([[r["x"], r["y"], r["z"]] for r in rows], dtype=np.float64)
            elif name == "face":
                faces = _triangulate([r[props[0][0]] for r in rows])
    else:
        off = body_start
        for name, count, props in elements:
            if all(ldt is None for _, _, ldt in props):
                dt = np.dtype([(p, "<" + t) for p, t, _ in props])
                if off + dt.itemsize * count > len(data):
                    raise MeshError(f"{path}: offset {off}: truncated {name} block")
                arr = np.frombuffer(data, dtype=dt, count=count, offset=off)
                off += dt.itemsize * count
                if name == "vertex":
                    verts = np.stack([arr["x"], arr["y"], arr["z"]], axis=1).astype(np.float64)
            else:
                polys = []
                for _ in range(count):
                    rec = {}
                    for pname, t, ldt in props:
                        if ldt is None:
                            sz = np.dtype(t).itemsize
                            off += sz
                            continue
                        csz = np.dtype(ldt).itemsize
                        if off + csz > len(data):
                            raise MeshError(f"{path}: offset {off}: truncated {name} list")
                        n = int(np.frombuffer(data, "<" + ldt, 1, off)[0])
                        off += csz
                        isz = np.dtype(t).itemsize
                        if off + n * isz > len(data):
                            raise MeshError(f"{path}: offset {off}: truncated {name} list")
                        rec[pname] = np.frombuffer(data, "<" + t, n, off).tolist()
                        off += n * isz
                    polys.append(next(iter(rec.values())))
                if name == "face":
                    faces = _triangulate(polys)
    if verts is None:
        raise MeshError(f"{path}: no vertex element")
    if faces is None:
        faces = np.zeros((0, 3), dtype=np.int64)
    return verts, faces


def _triangulate(polys):
    out = []
    for p in polys:
        for k in range(1, len(p) - 1):
            out.append([p[0], p[k], p[k + 1]])
    return np.array(out, dtype=np.int64).reshape(-1, 3)


def save_obj(mesh: TriMesh, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, z in mesh.vertices:
            fh.write(f"v {float(x)!r} {float(y)!r} {float(z)!r}\n")
        for a, b, c in mesh.faces + 1:
            fh.write(f"f {a} {b} {c}\n")


def save_ply(mesh: TriMesh, path: str | os.PathLike, binary: bool = True) -> None:
    nv, nf = mesh.n_vertices, mesh.n_faces
    header = ("ply\nformat {} 1.0\nelement vertex {}\nproperty double x\nproperty double y\n"
              "property double z\nelement face {}\nproperty list uchar int vertex_indices\n"
              "end_header\n").format("binary_little_endian" if binary else "ascii", nv, nf)
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if binary:
            fh.write(mesh.vertices.astype("<f8").tobytes())
            rec = np.zeros(nf, dtype=[("n", "u1"), ("i", "<i4", 3)])
            rec["n"] = 3
            rec["i"] = mesh.faces
            fh.write(rec.tobytes())
        else:
            for x, y, z in mesh.vertices:
                fh.write(f"{float(x)!r} {float(y)!r} {float(z)!r}\n".encode())
            for a, b, c in mesh.faces:
                fh.write(f"3 {a} {b} {c}\n".encode())


# --------------------------------------------------------------------- topology

def is_watertight(mesh: TriMesh) -> bool:
    """True iff every undirected edge is used by exactly two faces, once in
    each direction (closed, consistently oriented, edge-manifold)."""
    if mesh.n_faces == 0:
        return False
    f = mesh.faces
    directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    nv = np.int64(mesh.n_vertices)
    key = directed[:, 0] * nv + directed[:, 1]
    rev = directed[:, 1] * nv + directed[:, 0]
    uk, counts = np.unique(key, return_counts=True)
    if (counts != 1).any():
        return False
    # each directed edge must have its reverse present exactly once
    pos = np.searchsorted(uk, rev)
    pos = np.minimum(pos, len(uk) - 1)
    return bool(np.all(uk[pos] == rev))


def sample_surface(mesh: TriMesh, count: int, seed: int = 0):
    """Area-weighted uniform samples on the surface.

    Returns ``(points, face_ids)``. Uses numpy's Philox counter-based
    generator keyed by ``seed``.
    """
    if mesh.n_faces == 0:
        raise MeshError("cannot sample an empty mesh")
    rng = np.random.Generator(np.random.Philox(key=seed))
    cdf = np.cumsum(mesh.face_areas())
    cdf /= cdf[-1]
    fid = np.searchsorted(cdf, rng.random(count), side="right")
    fid = np.minimum(fid, mesh.n_faces - 1)
    r1 = np.sqrt(rng.random(count))
    r2 = rng.random(count)
    tri = mesh.triangles()[fid]
    pts = ((1 - r1)[:, None] * tri[:, 0] + (r1 * (1 - r2))[:, None] * tri[:, 1]
           + (r1 * r2)[:, None] * tri[:, 2])
    return pts, fid
