"""Scene configuration: a single JSON document, validated with every error
collected before reporting.

Minimal example::

    {"mesh": "body.obj",
     "cameras": [{"fx": 100, "fy": 100, "cx": 64, "cy": 64,
                  "rotation": [[1,0,0],[0,1,0],[0,0,1]], "translation": [0,0,3],
                  "width": 128, "height": 128}],
     "field": {"name": "uniform_ball"}}

Relative paths resolve against the config file's directory.
"""
from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .camera import Camera

FIELDS = {
    "uniform_ball": {"center": [0.0, 0.0, 0.0], "radius": 1.0, "sigma": 50.0,
                     "color": [1.0, 0.5, 0.25]},
    "gaussian_blob": {"center": [0.0, 0.0, 0.0], "scale": 0.3, "sigma": 20.0,
                      "color": [0.2, 0.6, 1.0]},
    "mesh_shell": {"width": 0.02, "sigma": 50.0, "color": [0.8, 0.8, 0.8]},
    "empty": {},
}

DEFAULTS = {
    "sampler": {"n_samples": 256, "seed": 0, "dilation_radius": None, "padding": 0.05,
                "free_space": 32, "jitter": True},
    "blend": {"enabled": False, "sharpness": 50.0, "d_k": 16, "mode": "multiply",
              "octaves": 10},
    "output": {"camera": 0, "formats": ["png", "dpth"], "lattice": 64, "grid_resolution": 64,
               "with_gradient": False, "with_canonical": False, "chamfer_scale": 1.0,
               "samples": 100000, "fscore_threshold": 0.01, "queries": 64000},
}


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class CameraSpec:
    camera: Camera
    image: Optional[str] = None
    mask: Optional[str] = None
    depth: Optional[str] = None


@dataclass
class SceneConfig:
    mesh: Optional[str]
    canonical_mesh: Optional[str]
    global_rotation: Optional[list]
    cameras: list
    field: dict
    sampler: dict
    blend: dict
    output: dict
    reference_mesh: Optional[str] = None
    source: Optional[str] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        cams = []
        for cs in self.cameras:
            d = cs.camera.to_dict()
            for k in ("image", "mask", "depth"):
                if getattr(cs, k):
                    d[k] = getattr(cs, k)
            cams.append(d)
        out = {"mesh": self.mesh, "cameras": cams, "field": copy.deepcopy(self.field),
               "sampler": dict(self.sampler), "blend": dict(self.blend),
               "output": copy.deepcopy(self.output)}
        for k in ("canonical_mesh", "global_rotation", "reference_mesh"):
            if getattr(self, k) is not None:
                out[k] = getattr(self, k)
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _vec(v, n) -> bool:
    return isinstance(v, list) and len(v) == n and all(_num(x) for x in v)


def validate_dict(doc: Any, base_dir: str = ".") -> SceneConfig:
    """Resolve defaults and check every field; raises :class:`ConfigError` with all problems."""
    errs: list[str] = []
    if not isinstance(doc, dict):
        raise ConfigError(["$: config must be a JSON object"])

    def path(key, value, required=False):
        if value is None:
            if required:
                errs.append(f"{key}: missing")
            return None
        if not isinstance(value, str):
            errs.append(f"{key}: expected a file path string")
            return None
        p = value if os.path.isabs(value) else os.path.normpath(os.path.join(base_dir, value))
        if not os.path.exists(p):
            errs.append(f"{key}: file not found: {p}")
        return p

    mesh = path("mesh", doc.get("mesh"))
    canonical = path("canonical_mesh", doc.get("canonical_mesh"))
    reference = path("reference_mesh", doc.get("reference_mesh"))
    grot = doc.get("global_rotation")
    if grot is not None and not (isinstance(grot, list) and len(grot) == 3
                                 and all(_vec(r, 3) for r in grot)):
        errs.append("global_rotation: expected a 3x3 list")
        grot = None

    cams = []
    raw_cams = doc.get("cameras")
    if not isinstance(raw_cams, list) or not raw_cams:
        errs.append("cameras: need a non-empty list")
        raw_cams = []
    for i, c in enumerate(raw_cams):
        key = f"cameras[{i}]"
        if not isinstance(c, dict):
            errs.append(f"{key}: expected an object")
            continue
        bad = False
        for k in ("fx", "fy", "cx", "cy"):
            if not _num(c.get(k)):
                errs.append(f"{key}.{k}: expected a number")
                bad = True
        for k in ("width", "height"):
            if not (isinstance(c.get(k), int) and c.get(k) > 0):
                errs.append(f"{key}.{k}: expected a positive integer")
                bad = True
        if not (isinstance(c.get("rotation"), list) and len(c["rotation"]) == 3
                and all(_vec(r, 3) for r in c["rotation"])):
            errs.append(f"{key}.rotation: expected a 3x3 list")
            bad = True
        if not _vec(c.get("translation"), 3):
            errs.append(f"{key}.translation: expected 3 numbers")
            bad = True
        extra = {k: path(f"{key}.{k}", c.get(k)) for k in ("image", "mask", "depth")}
        if bad:
            continue
        try:
            cam = Camera.from_dict(c)
        except ValueError as exc:
            errs.append(f"{key}: {exc}")
            continue
        cams.append(CameraSpec(cam, **extra))

    fld = doc.get("field")
    if not isinstance(fld, dict) or fld.get("name") not in FIELDS:
        errs.append(f"field.name: expected one of {sorted(FIELDS)}")
        fld = {"name": "empty"}
    else:
        params = dict(FIELDS[fld["name"]])
        for k, v in fld.items():
            if k == "name":
                continue
            if k not in params:
                errs.append(f"field.{k}: unknown parameter for {fld['name']}")
                continue
            ref = params[k]
            if isinstance(ref, list) and not _vec(v, len(ref)):
                errs.append(f"field.{k}: expected {len(ref)} numbers")
            elif _num(ref) and not (_num(v) and v >= 0):
                errs.append(f"field.{k}: expected a non-negative number")
            else:
                params[k] = v
        if fld["name"] == "mesh_shell" and mesh is None and doc.get("mesh") is None:
            errs.append("field: mesh_shell needs a mesh")
        fld = {"name": fld["name"], **params}

    sections = {}
    for sec, defaults in DEFAULTS.items():
        given = doc.get(sec, {})
        if not isinstance(given, dict):
            errs.append(f"{sec}: expected an object")
            given = {}
        merged = copy.deepcopy(defaults)
        for k, v in given.items():
            if k not in defaults:
                errs.append(f"{sec}.{k}: unknown key")
            else:
                merged[k] = v
        sections[sec] = merged

    s = sections["sampler"]
    if not (isinstance(s["n_samples"], int) and s["n_samples"] >= 2):
        errs.append("sampler.n_samples: expected an integer >= 2")
    if not (isinstance(s["seed"], int) and 0 <= s["seed"] < 2 ** 64):
        errs.append("sampler.seed: expected an unsigned 64-bit integer")
    if s["dilation_radius"] is not None and not (isinstance(s["dilation_radius"], int)
                                                 and s["dilation_radius"] >= 0):
        errs.append("sampler.dilation_radius: expected a non-negative integer or null")
    if not (_num(s["padding"]) and s["padding"] >= 0):
        errs.append("sampler.padding: expected a non-negative number")
    if not (isinstance(s["free_space"], int) and s["free_space"] >= 0):
        errs.append("sampler.free_space: expected a non-negative integer")
    b = sections["blend"]
    if not (_num(b["sharpness"]) and b["sharpness"] > 0):
        errs.append("blend.sharpness: expected a positive number")
    if not (isinstance(b["d_k"], int) and b["d_k"] > 0):
        errs.append("blend.d_k: expected a positive integer")
    if b["mode"] not in ("multiply", "log"):
        errs.append("blend.mode: expected 'multiply' or 'log'")
    o = sections["output"]
    if not (isinstance(o["camera"], int) and 0 <= o["camera"] < max(len(raw_cams), 1)):
        errs.append("output.camera: expected an index into cameras")
    for k in ("lattice", "grid_resolution", "samples", "queries"):
        if not (isinstance(o[k], int) and o[k] >= 2):
            errs.append(f"output.{k}: expected an integer >= 2")

    if errs:
        raise ConfigError(errs)
    return SceneConfig(mesh, canonical, grot, cams, fld, sections["sampler"], sections["blend"],
                       sections["output"], reference)


def validate(config_path: str | os.PathLike) -> SceneConfig:
    config_path = os.fspath(config_path)
    try:
        with open(config_path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError([f"$: cannot read {config_path}: {exc.strerror}"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"$: invalid JSON at line {exc.lineno} col {exc.colno}: {exc.msg}"]) \
            from None
    cfg = validate_dict(doc, os.path.dirname(os.path.abspath(config_path)))
    cfg.source = config_path
    return cfg


def rotation_or_identity(cfg: SceneConfig) -> np.ndarray:
    return np.eye(3) if cfg.global_rotation is None else np.asarray(cfg.global_rotation, float)
