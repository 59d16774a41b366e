"""Command-line entry point: ``humanfield <subcommand> [flags]``.

Exit codes: 0 success, 1 invalid configuration or arguments, 2 runtime
failure. ``--json`` prints a machine-readable summary on stdout.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings
from typing import Optional

import numpy as np

from . import io as hio
from .blend import AnalyticFeatureProvider, make_blend_stage, occlusion_prior
from .body import embed, normalize_frame
from .camera import DepthMap, rasterize_depth
from .config import ConfigError, SceneConfig, rotation_or_identity, validate
from .grid import brute_closest_points, build_grid, closest_points
from .mesh import MeshError, TriMesh, load_mesh
from .metrics import MetricReport, psnr, ssim, surface_distances
from .render import EmptyField, GaussianBlob, MeshShell, UniformBall, render_image
from .sampling import counter_uniform, default_dilation, dilate_mask, padded_box
from .shapes import torus

STREAM_QUERIES = 3
BENCH_FACES = (250, 100)  # torus tessellation giving 50 000 faces


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class Timer:
    def __init__(self):
        self.stages: dict = {}

    def __call__(self, name):
        timer = self

        class _Ctx:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                timer.stages[name] = timer.stages.get(name, 0.0) + time.perf_counter() - self.t
        return _Ctx()


# ------------------------------------------------------------------ helpers

def _set_threads(n: Optional[int]) -> int:
    """Numba kernels use at most the available cores; the render pool gets
    the requested count so chunk scheduling can be exercised anywhere."""
    import numba
    hw = numba.config.NUMBA_NUM_THREADS
    n = hw if n is None else max(1, int(n))
    numba.set_num_threads(min(n, hw))
    return n


def _need_config(args) -> SceneConfig:
    if not args.config:
        raise UsageError(f"{args.command} requires --config")
    cfg = validate(args.config)
    if args.seed is not None:
        cfg.sampler["seed"] = args.seed
    return cfg


def _mesh(cfg: SceneConfig) -> TriMesh:
    if cfg.mesh is None:
        raise MeshError("config has no mesh")
    return load_mesh(cfg.mesh, cfg.canonical_mesh)


def _field(cfg: SceneConfig, mesh: Optional[TriMesh]):
    p = {k: v for k, v in cfg.field.items() if k != "name"}
    name = cfg.field["name"]
    if name == "uniform_ball":
        return UniformBall(tuple(p["center"]), p["radius"], p["sigma"], tuple(p["color"]))
    if name == "gaussian_blob":
        return GaussianBlob(tuple(p["center"]), p["scale"], p["sigma"], tuple(p["color"]))
    if name == "mesh_shell":
        return MeshShell(mesh, p["width"], p["sigma"], tuple(p["color"]),
                         cfg.output["grid_resolution"])
    return EmptyField()


def _field_box(cfg: SceneConfig):
    p = cfg.field
    if p["name"] == "uniform_ball":
        c, r = np.asarray(p["center"], float), float(p["radius"])
    elif p["name"] == "gaussian_blob":
        c, r = np.asarray(p["center"], float), 3.0 * float(p["scale"])
    else:
        c, r = np.zeros(3), 1.0
    return c - r, c + r


def _emit(args, summary: dict, lines: list[str]) -> None:
    if args.json:
        print(json.dumps(summary, indent=2, sort_keys=True))
    else:
        for ln in lines:
            print(ln)


def _out(args, name: str) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _query_points(lo, hi, count: int, seed: int) -> np.ndarray:
    u = counter_uniform(seed, STREAM_QUERIES, np.arange(count)[:, None], np.arange(3))
    return lo + u * (hi - lo)


# -------------------------------------------------------------- subcommands

def cmd_validate(args) -> dict:
    cfg = _need_config(args)
    print(cfg.dumps())
    return {}


def cmd_render(args) -> dict:
    cfg = _need_config(args)
    tm = Timer()
    mesh = None
    if cfg.mesh is not None:
        with tm("load"):
            mesh = _mesh(cfg)
    field = _field(cfg, mesh)
    if isinstance(field, MeshShell):
        with tm("grid_build"):
            from .grid import get_grid
            get_grid(mesh, cfg.output["grid_resolution"])
    box = mesh.bounds() if mesh is not None else _field_box(cfg)
    s = cfg.sampler
    hull_cams = [cs for cs in cfg.cameras if cs.mask]
    cams = masks = None
    if hull_cams:
        with tm("masks"):
            cams = [cs.camera for cs in hull_cams]
            masks = []
            for cs in hull_cams:
                r = s["dilation_radius"]
                r = default_dilation(cs.camera) if r is None else r
                m = hio.read_mask(cs.mask)
                if m.shape != cs.camera.shape:
                    raise MeshError(f"mask {cs.mask} has shape {m.shape}, camera {cs.camera.shape}")
                masks.append(dilate_mask(m, r))
    stage = None
    if cfg.blend["enabled"]:
        with tm("blend_setup"):
            src = [cs for cs in cfg.cameras if cs.image]
            if not src:
                raise MeshError("blending needs at least one camera with an image")
            depths = []
            for cs in src:
                if cs.depth:
                    depths.append(hio.load_depth(cs.depth))
                elif mesh is not None:
                    depths.append(rasterize_depth(mesh, cs.camera))
                else:
                    depths.append(DepthMap(np.full(cs.camera.shape, np.inf)))
            provider = AnalyticFeatureProvider(cfg.blend["d_k"], cfg.blend["octaves"],
                                               seed=s["seed"])
            stage = make_blend_stage([cs.camera for cs in src],
                                     [hio.read_image(cs.image) for cs in src], depths, provider,
                                     cfg.blend["sharpness"], cfg.blend["mode"])
    cam = cfg.cameras[cfg.output["camera"]].camera
    out = render_image(cam, field, box, s["n_samples"], s["seed"], cams, masks, stage,
                       threads=args.threads, jitter=s["jitter"])
    for k, v in out.timings.items():
        if k != "total":
            tm.stages[k] = tm.stages.get(k, 0.0) + v
    files = []
    with tm("export"):
        if "png" in cfg.output["formats"]:
            files.append(_out(args, "render.png"))
            hio.write_png_rgba(files[-1], out.color, out.alpha)
        if "dpth" in cfg.output["formats"]:
            files.append(_out(args, "alpha.dpth"))
            hio.write_dpth(files[-1], out.alpha, sentinel_to_zero=False)
            files.append(_out(args, "depth.dpth"))
            hio.write_dpth(files[-1], np.where(out.alpha > 0, out.expected_depth, np.inf))
    return {"files": files, "width": cam.width, "height": cam.height,
            "coverage": float((out.alpha > 0).mean()), "mean_alpha": float(out.alpha.mean()),
            "timings": tm.stages}


def cmd_sdf_grid(args) -> dict:
    cfg = _need_config(args)
    tm = Timer()
    with tm("load"):
        mesh = _mesh(cfg)
    with_grad = args.with_gradient or cfg.output["with_gradient"]
    with_can = args.with_canonical or cfg.output["with_canonical"]
    if with_can and mesh.canonical_vertices is None:
        raise MeshError("--with-canonical needs canonical_mesh in the config")
    res = args.resolution or cfg.output["lattice"]
    frame = normalize_frame(mesh, rotation_or_identity(cfg))
    with tm("grid_build"):
        grid = build_grid(mesh, cfg.output["grid_resolution"])
    axis = np.linspace(-1.0, 1.0, res)
    Y = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), -1).reshape(-1, 3)
    X = frame.apply_inverse(Y)
    with tm("embed"), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        e = embed(mesh, X, grid, canonical=with_can)
    chans = [e.sdf[:, None]]
    names = ["sdf"]
    if with_grad:
        chans.append(e.grad)
        names += ["grad_x", "grad_y", "grad_z"]
    if with_can:
        chans.append(e.canonical_point)
        names += ["canonical_x", "canonical_y", "canonical_z"]
    vol = np.concatenate(chans, 1).reshape(res, res, res, -1)
    with tm("export"):
        path = _out(args, "sdf.sdf3")
        hio.write_sdf3(path, vol)
        side = {"dims": [res] * 3, "channels": names, "lattice": [-1.0, 1.0],
                "frame": frame.to_dict(), "sign": "positive inside",
                "units": "world (mesh) units"}
        with open(_out(args, "sdf.json"), "w", encoding="utf-8") as fh:
            json.dump(side, fh, indent=2, sort_keys=True)
    return {"files": [path, _out(args, "sdf.json")], "dims": [res] * 3, "channels": names,
            "inside_fraction": float((e.sdf > 0).mean()), "timings": tm.stages}


def _load_points(path: str) -> np.ndarray:
    P = np.load(path) if path.endswith(".npy") else np.loadtxt(path, delimiter=None, ndmin=2)
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[1] != 3:
        raise ValueError(f"{path}: expected an (n, 3) array of points")
    return P


def cmd_embed(args) -> dict:
    cfg = _need_config(args)
    tm = Timer()
    with tm("load"):
        mesh = _mesh(cfg)
        if args.points:
            P = _load_points(args.points)
        else:
            lo, hi = padded_box(*mesh.bounds())
            P = _query_points(lo, hi, args.count, cfg.sampler["seed"])
    with tm("grid_build"):
        grid = build_grid(mesh, cfg.output["grid_resolution"])
    with tm("embed"), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        e = embed(mesh, P, grid, canonical=mesh.canonical_vertices is not None)
    with tm("export"):
        path = _out(args, "embedding.npy")
        np.save(path, np.concatenate([P, e.features(), e.face[:, None].astype(np.float64)], 1))
    return {"files": [path], "points": len(P),
            "columns": ["x", "y", "z", "sdf", "grad_x", "grad_y", "grad_z",
                        "canonical_x", "canonical_y", "canonical_z", "face"],
            "inside_fraction": float((e.sdf > 0).mean()), "timings": tm.stages}


def cmd_occlusion(args) -> dict:
    cfg = _need_config(args)
    tm = Timer()
    with tm("load"):
        mesh = _mesh(cfg)
    view = cfg.cameras[cfg.output["camera"]].camera
    with tm("rasterize"):
        probe = rasterize_depth(mesh, view)
        depths = [rasterize_depth(mesh, cs.camera) for cs in cfg.cameras]
    jj, ii = np.nonzero(probe.covered)
    z = probe.depth[jj, ii]
    xc = np.stack([(ii + 0.5 - view.cx) / view.fx * z, (jj + 0.5 - view.cy) / view.fy * z, z], -1)
    X = (xc - view.translation) @ view.rotation
    files, means = [], []
    with tm("occlusion"):
        maps = []
        for cs, dep in zip(cfg.cameras, depths):
            img = np.zeros(view.shape)
            img[jj, ii] = occlusion_prior(X, cs.camera, dep, cfg.blend["sharpness"])
            maps.append(img)
            means.append(float(img[jj, ii].mean()) if len(jj) else 0.0)
    with tm("export"):
        for n, img in enumerate(maps):
            files.append(_out(args, f"visibility_{n:02d}.png"))
            hio.write_png_gray(files[-1], img)
    return {"files": files, "probe_pixels": int(len(jj)), "mean_visibility": means,
            "timings": tm.stages}


def cmd_recon_eval(args) -> dict:
    cfg = validate(args.config) if args.config else None
    pred = args.pred or (cfg.mesh if cfg else None)
    gt = args.gt or (cfg.reference_mesh if cfg else None)
    if not pred or not gt:
        raise UsageError("recon-eval needs --pred and --gt (or mesh/reference_mesh in --config)")
    out = cfg.output if cfg else {"samples": 100000, "fscore_threshold": 0.01, "chamfer_scale": 1.0}
    samples = args.samples or out["samples"]
    th = args.threshold or out["fscore_threshold"]
    seed = args.seed if args.seed is not None else (cfg.sampler["seed"] if cfg else 0)
    tm = Timer()
    with tm("load"):
        a, b = load_mesh(pred), load_mesh(gt)
    with tm("metrics"):
        sd = surface_distances(a, b, samples, seed)
    scale = out["chamfer_scale"]
    rep = MetricReport(chamfer=float(sd.chamfer) * scale, normal_dist=float(sd.normal_dist),
                       uhd=float(sd.uhd) * scale, fscore=sd.fscore(th)).to_dict()
    path = _out(args, "recon_metrics.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rep, fh, indent=2, sort_keys=True)
    return {"files": [path], **rep, "fscore_threshold": th, "samples": samples,
            "timings": tm.stages}


def cmd_img_metrics(args) -> dict:
    if not args.image or not args.reference:
        raise UsageError("img-metrics needs --image and --reference")
    tm = Timer()
    with tm("load"):
        a, b = hio.read_image(args.image), hio.read_image(args.reference)
        mask = hio.read_mask(args.mask) if args.mask else None
    with tm("metrics"):
        rep = MetricReport(psnr=psnr(a, b, mask), ssim=ssim(a, b)).to_dict()
    path = _out(args, "image_metrics.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rep, fh, indent=2, sort_keys=True)
    return {"files": [path], **rep, "timings": tm.stages}


def cmd_bench_cp(args) -> dict:
    cfg = validate(args.config) if args.config else None
    tm = Timer()
    with tm("load"):
        if args.mesh:
            mesh = load_mesh(args.mesh)
        elif cfg is not None and cfg.mesh is not None:
            mesh = _mesh(cfg)
        else:
            mesh = torus(1.0, 0.35, *BENCH_FACES)
    res = args.resolution or (cfg.output["grid_resolution"] if cfg else 64)
    nq = args.queries or (cfg.output["queries"] if cfg else 64000)
    seed = args.seed if args.seed is not None else (cfg.sampler["seed"] if cfg else 0)
    lo, hi = padded_box(*mesh.bounds())
    P = _query_points(lo, hi, nq, seed)
    closest_points(mesh, P[:8], build_grid(mesh, 4))  # JIT warm-up outside the timings
    brute_closest_points(mesh, P[:8])
    t0 = time.perf_counter()
    grid = build_grid(mesh, res)
    t_build = time.perf_counter() - t0
    t0 = time.perf_counter()
    acc = closest_points(mesh, P, grid)
    t_acc = time.perf_counter() - t0
    report = {"faces": mesh.n_faces, "queries": nq, "grid_resolution": res}
    if not args.skip_brute:
        t0 = time.perf_counter()
        ref = brute_closest_points(mesh, P)
        t_brute = time.perf_counter() - t0
        report.update(brute_seconds=t_brute, speedup=t_brute / t_acc,
                      max_abs_error=float(np.abs(acc.distance - ref.distance).max()),
                      face_mismatches=int((acc.face != ref.face).sum()))
    report.update(accel_seconds=t_acc, grid_build_seconds=t_build)
    files = [_out(args, "bench_cp.json"), _out(args, "bench_cp_distance.npy"),
             _out(args, "bench_cp_face.npy")]
    with open(files[0], "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    np.save(files[1], acc.distance)
    np.save(files[2], acc.face)
    return {"files": files, **report, "timings": tm.stages}


COMMANDS = {
    "validate": cmd_validate, "render": cmd_render, "sdf-grid": cmd_sdf_grid,
    "embed": cmd_embed, "occlusion": cmd_occlusion, "recon-eval": cmd_recon_eval,
    "img-metrics": cmd_img_metrics, "bench-cp": cmd_bench_cp,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="humanfield", description=__doc__.splitlines()[0])
    common = _Parser(add_help=False)
    common.add_argument("--config", help="scene config JSON")
    common.add_argument("--out", default=".", help="output directory (default: .)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    common.add_argument("--json", action="store_true", help="print a JSON summary on stdout")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "sdf-grid":
            sp.add_argument("--resolution", type=int, help="lattice points per axis")
            sp.add_argument("--with-gradient", action="store_true")
            sp.add_argument("--with-canonical", action="store_true")
        elif name == "embed":
            sp.add_argument("--points", help=".npy or whitespace-separated xyz file")
            sp.add_argument("--count", type=int, default=4096,
                            help="random query points when --points is absent")
        elif name == "recon-eval":
            sp.add_argument("--pred", help="reconstructed mesh (OBJ/PLY)")
            sp.add_argument("--gt", help="ground-truth mesh (OBJ/PLY)")
            sp.add_argument("--samples", type=int)
            sp.add_argument("--threshold", type=float, help="F-score threshold")
        elif name == "img-metrics":
            sp.add_argument("--image")
            sp.add_argument("--reference")
            sp.add_argument("--mask")
        elif name == "bench-cp":
            sp.add_argument("--mesh", help="mesh file (default: 50k-face torus)")
            sp.add_argument("--queries", type=int)
            sp.add_argument("--resolution", type=int)
            sp.add_argument("--skip-brute", action="store_true")
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise UsageError("--seed must be an unsigned 64-bit integer")
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be >= 1")
        args.threads = _set_threads(args.threads)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        summary = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return 1
    except (MeshError, hio.FormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.command != "validate":
        lines = [f"{args.command}: ok"] + [f"  wrote {f}" for f in summary.get("files", [])]
        lines += [f"  {k}: {v:.4f}s" for k, v in summary.get("timings", {}).items()]
        _emit(args, summary, lines)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
