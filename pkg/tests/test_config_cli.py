import json
import os
import subprocess
import sys

import numpy as np
import pytest

from humanfield.camera import look_at
from humanfield.cli import run
from humanfield.config import DEFAULTS, ConfigError, validate, validate_dict
from humanfield.io import read_dpth, read_sdf3, write_png_gray, write_png_rgb
from humanfield.mesh import save_obj
from humanfield.shapes import icosphere


def write_scene(root, field=None, **extra):
    root.mkdir(parents=True, exist_ok=True)
    save_obj(icosphere(2, radius=0.5), root / "body.obj")
    cams = [look_at([0, 0, 2.5], width=24, height=24).to_dict(),
            look_at([2.5, 0, 0], width=24, height=24).to_dict()]
    doc = {"mesh": "body.obj", "cameras": cams,
           "field": field or {"name": "uniform_ball", "radius": 0.5},
           "sampler": {"n_samples": 24, "seed": 5}, **extra}
    (root / "scene.json").write_text(json.dumps(doc))
    return root / "scene.json"


# ---------------------------------------------------------------- config

def test_defaults_filled(tmp_path):
    cfg = validate(write_scene(tmp_path))
    assert cfg.sampler["n_samples"] == 24
    assert cfg.sampler["padding"] == DEFAULTS["sampler"]["padding"]
    assert cfg.field["sigma"] == 50.0
    assert cfg.mesh == str(tmp_path / "body.obj")


def test_missing_file_single_error(tmp_path):
    with pytest.raises(ConfigError) as exc:
        validate(tmp_path / "nope.json")
    assert len(exc.value.errors) == 1


def test_all_errors_collected(tmp_path):
    doc = {"mesh": "missing.obj", "cameras": [{"fx": 1}], "field": {"name": "cloud"},
           "sampler": {"n_samples": 1, "bogus": 2}}
    with pytest.raises(ConfigError) as exc:
        validate_dict(doc, str(tmp_path))
    msgs = " | ".join(exc.value.errors)
    for key in ("mesh", "cameras[0].fy", "cameras[0].width", "field.name", "sampler.n_samples",
                "sampler.bogus"):
        assert key in msgs


def test_two_independent_errors(tmp_path):
    path = write_scene(tmp_path, field={"name": "uniform_ball", "radius": -1},
                       blend={"mode": "max"})
    with pytest.raises(ConfigError) as exc:
        validate(path)
    assert len(exc.value.errors) == 2


def test_dump_is_a_fixed_point(tmp_path):
    cfg = validate(write_scene(tmp_path))
    (tmp_path / "again.json").write_text(cfg.dumps())
    assert validate(tmp_path / "again.json").dumps() == cfg.dumps()


def test_invalid_json_reports_position(tmp_path):
    (tmp_path / "x.json").write_text("{\n  'a': 1}")
    with pytest.raises(ConfigError) as exc:
        validate(tmp_path / "x.json")
    assert "line 2" in exc.value.errors[0]


# ------------------------------------------------------------------- cli

def test_exit_codes(tmp_path, capsys):
    path = write_scene(tmp_path)
    assert run(["validate", "--config", str(path)]) == 0
    assert run(["render"]) == 1                                  # missing --config
    assert run(["no-such-command"]) == 1
    assert run(["validate", "--config", str(tmp_path / "nope.json")]) == 1
    assert run(["render", "--config", str(path), "--threads", "0"]) == 1
    (tmp_path / "broken.obj").write_text("v 0 0 0\nf 1 2 3\n")
    bad = write_scene(tmp_path / "b", field={"name": "mesh_shell"})
    doc = json.loads(bad.read_text())
    doc["mesh"] = str(tmp_path / "broken.obj")
    bad.write_text(json.dumps(doc))
    assert run(["embed", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    capsys.readouterr()


def test_console_script_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "humanfield.cli", "validate", "--config",
                        str(tmp_path / "missing.json")], capture_output=True, text=True)
    assert r.returncode == 1 and "config error" in r.stderr


def test_render_writes_files(tmp_path, capsys):
    path = write_scene(tmp_path)
    assert run(["render", "--config", str(path), "--out", str(tmp_path / "o"), "--json"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert sorted(os.path.basename(f) for f in summary["files"]) == \
        ["alpha.dpth", "depth.dpth", "render.png"]
    alpha = read_dpth(tmp_path / "o" / "alpha.dpth", zero_is_sentinel=False)
    assert alpha.shape == (24, 24) and alpha.max() > 0.9 and alpha[0, 0] == 0
    depth = read_dpth(tmp_path / "o" / "depth.dpth")
    assert np.isinf(depth[0, 0]) and 1.9 < depth[12, 12] < 2.5


def test_render_byte_identical_across_threads(tmp_path, capsys):
    path = write_scene(tmp_path, field={"name": "gaussian_blob"})
    for name, threads in (("a", "1"), ("b", "4")):
        assert run(["render", "--config", str(path), "--out", str(tmp_path / name),
                    "--threads", threads]) == 0
    for f in ("render.png", "alpha.dpth", "depth.dpth"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    capsys.readouterr()


def test_render_with_masks_and_blend(tmp_path, capsys):
    path = write_scene(tmp_path, blend={"enabled": True})
    doc = json.loads(path.read_text())
    write_png_gray(tmp_path / "empty.png", np.zeros((24, 24)))
    write_png_rgb(tmp_path / "img.png", np.full((24, 24, 3), 0.5))
    doc["cameras"][1]["image"] = "img.png"
    path.write_text(json.dumps(doc))
    assert run(["render", "--config", str(path), "--out", str(tmp_path / "o")]) == 0
    doc["cameras"][0]["mask"] = "empty.png"
    path.write_text(json.dumps(doc))
    assert run(["render", "--config", str(path), "--out", str(tmp_path / "m")]) == 0
    alpha = read_dpth(tmp_path / "m" / "alpha.dpth", zero_is_sentinel=False)
    assert not alpha.any()
    capsys.readouterr()


def test_sdf_grid_and_sidecar(tmp_path, capsys):
    path = write_scene(tmp_path)
    assert run(["sdf-grid", "--config", str(path), "--out", str(tmp_path / "o"),
                "--resolution", "9", "--with-gradient"]) == 0
    vol = read_sdf3(tmp_path / "o" / "sdf.sdf3")
    side = json.loads((tmp_path / "o" / "sdf.json").read_text())
    assert vol.shape == (9, 9, 9, 4) and side["channels"][0] == "sdf"
    assert vol[4, 4, 4, 0] > 0.45 and vol[0, 0, 0, 0] < 0
    capsys.readouterr()


def test_embed_columns(tmp_path, capsys):
    path = write_scene(tmp_path)
    assert run(["embed", "--config", str(path), "--out", str(tmp_path / "o"),
                "--count", "100"]) == 0
    arr = np.load(tmp_path / "o" / "embedding.npy")
    assert arr.shape == (100, 11)
    r = np.linalg.norm(arr[:, :3], axis=1)
    far = np.abs(r - 0.5) > 0.05
    assert np.all(np.sign(arr[far, 3]) == np.sign(0.5 - r[far]))
    capsys.readouterr()


def test_occlusion_maps(tmp_path, capsys):
    path = write_scene(tmp_path)
    assert run(["occlusion", "--config", str(path), "--out", str(tmp_path / "o"), "--json"]) == 0
    s = json.loads(capsys.readouterr().out)
    assert len(s["files"]) == 2
    # the output camera sees its own probe surface
    assert s["mean_visibility"][0] > 0.45


def test_recon_and_image_metrics(tmp_path, capsys):
    path = write_scene(tmp_path)
    save_obj(icosphere(2, radius=0.55), tmp_path / "gt.obj")
    assert run(["recon-eval", "--config", str(path), "--gt", str(tmp_path / "gt.obj"),
                "--samples", "5000", "--threshold", "0.1", "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "recon_metrics.json").read_text())
    assert abs(rep["chamfer"] - 0.05) < 5e-3 and rep["fscore"] == 1.0
    write_png_rgb(tmp_path / "a.png", np.full((16, 16, 3), 0.4))
    write_png_rgb(tmp_path / "b.png", np.full((16, 16, 3), 0.5))
    assert run(["img-metrics", "--image", str(tmp_path / "a.png"), "--reference",
                str(tmp_path / "b.png"), "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "image_metrics.json").read_text())
    # 8-bit levels 102 and 128
    assert abs(rep["psnr"] - 10 * np.log10(1 / (26 / 255) ** 2)) < 1e-9
    assert run(["img-metrics", "--image", str(tmp_path / "a.png")]) == 1
    capsys.readouterr()


def test_bench_cp_small_exact(tmp_path, capsys):
    save_obj(icosphere(3), tmp_path / "s.obj")
    assert run(["bench-cp", "--mesh", str(tmp_path / "s.obj"), "--queries", "3000",
                "--resolution", "16", "--out", str(tmp_path / "o"), "--json"]) == 0
    s = json.loads(capsys.readouterr().out)
    assert s["max_abs_error"] == 0.0 and s["face_mismatches"] == 0
    assert run(["bench-cp", "--mesh", str(tmp_path / "s.obj"), "--queries", "3000",
                "--resolution", "16", "--out", str(tmp_path / "p"), "--threads", "1"]) == 0
    for f in ("bench_cp_distance.npy", "bench_cp_face.npy"):
        assert (tmp_path / "o" / f).read_bytes() == (tmp_path / "p" / f).read_bytes()
    capsys.readouterr()
