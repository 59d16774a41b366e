"""humanfield: geometry kernels for mesh-guided radiance field rendering.

Signed distance embeddings over triangle meshes, grid-accelerated
closest-point and ray queries, visual-hull bounded volume rendering,
occlusion-aware view blending and reconstruction metrics.
"""
import os

# Prefer OpenMP over an (often outdated) TBB; workqueue is not safe for the
# concurrent kernel launches the threaded renderer performs.
os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp tbb workqueue")

from .mesh import MeshError, TriMesh, is_watertight, load_mesh, save_obj, save_ply  # noqa: E402
from .camera import Camera, DepthMap, look_at, rasterize_depth  # noqa: E402
from .grid import VoxelGrid, accel_closest_point, build_grid, closest_points  # noqa: E402
from .body import (BodyEmbedding, body_embedding, closest_point_on_triangle,  # noqa: E402
                   embed, normalize_frame, sdf, sdf_gradient, sign_of)

__version__ = "0.1.0"

__all__ = [
    "MeshError", "TriMesh", "is_watertight", "load_mesh", "save_obj", "save_ply",
    "Camera", "DepthMap", "look_at", "rasterize_depth",
    "VoxelGrid", "accel_closest_point", "build_grid", "closest_points",
    "BodyEmbedding", "body_embedding", "closest_point_on_triangle", "embed",
    "normalize_frame", "sdf", "sdf_gradient", "sign_of",
]
