"""Field to mesh and back: isosurface extraction scored against the source.

A thin density shell around a cube is meshed with marching cubes, then the
result is scored against the cube with the surface distance metrics.
Run: python3 demos/reconstruction_round_trip.py
"""
from humanfield.metrics import surface_distances
from humanfield.render import MeshShell, extract_isosurface
from humanfield.shapes import cube

gt = cube(1.0)
res = 96
box = ((-0.75, -0.75, -0.75), (0.75, 0.75, 0.75))
cell = 1.5 / (res - 1)
field = MeshShell(gt, width=1.5 * cell, sigma=50.0)

recon = extract_isosurface(field, res, box=box)
print(f"reconstruction: {len(recon.faces)} faces at {res}^3, cell {cell:.4f}")

sd = surface_distances(recon, gt, samples=50000)
# the shell has an inner and an outer wall, each about one width from the cube
print(f"chamfer  {sd.chamfer:.4f}  ({sd.chamfer / cell:.2f} cells)")
print(f"hausdorff {sd.uhd:.4f}  ({sd.uhd / cell:.2f} cells)")
for k in (1, 2, 3):
    print(f"F-score @ {k} cells: {sd.fscore(k * cell):.3f}")
print(f"normal distance {sd.normal_dist:.4f}")
