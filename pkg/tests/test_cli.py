import json
import subprocess
import sys

import numpy as np
import pytest

from gspyramid.cli import main, parse_steps
from gspyramid.cloud_io import Camera, GaussianCloud, read_ply, write_cameras, write_ply
from gspyramid.codec import read_header
from gspyramid.errors import ConfigError

from conftest import random_cloud, ring_cameras


@pytest.fixture
def scene(tmp_path, rng):
    ply = tmp_path / "scene.ply"
    cloud = random_cloud(rng, 2000)
    write_ply(cloud, ply)
    cams = tmp_path / "cams.json"
    write_cameras(ring_cameras(4, radius=15.0), cams)
    return tmp_path, ply, cams, cloud


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_build_single_point(tmp_path, capsys):
    ply = tmp_path / "one.ply"
    write_ply(GaussianCloud(np.array([[1, 2, 3]], np.float32), np.zeros((1, 0), np.float32)), ply)
    code, out, _ = run(["build", "--input", ply, "--levels", 3, "--base-resolution", 1.0], capsys)
    assert code == 0
    man = json.loads(out)
    assert man["num_points"] == 1
    assert [lvl["count"] for lvl in man["levels"]] == [1, 0, 0]


def test_build_writes_manifest_and_levels(scene, capsys):
    tmp, ply, _, cloud = scene
    out_dir = tmp / "levels"
    code, out, _ = run(["build", "--input", ply, "--output", tmp / "m.json", "--levels", 4,
                        "--export-levels", out_dir], capsys)
    assert code == 0 and out.startswith("level 0:")
    man = json.loads((tmp / "m.json").read_text())
    counts = [lvl["count"] for lvl in man["levels"]]
    assert sum(counts) == cloud.n
    assert [read_ply(out_dir / f"level_{l}.ply").n for l in range(4)] == counts


def test_auto_levels_are_deterministic(scene, capsys):
    _, ply, _, _ = scene
    argv = ["build", "--input", ply, "--levels", "auto", "--seed", 7]
    first = run(argv, capsys)[1]
    assert run(argv, capsys)[1] == first
    assert 1 <= json.loads(first)["num_levels"] <= 12


def test_missing_input(tmp_path, capsys):
    code, _, err = run(["build", "--input", tmp_path / "nope.ply"], capsys)
    assert code == 2
    assert json.loads(err)["code"] == "io_error"


def test_malformed_ply(tmp_path, capsys):
    bad = tmp_path / "bad.ply"
    bad.write_bytes(b"ply\nformat ascii 1.0\nend_header\n")
    code, _, err = run(["build", "--input", bad], capsys)
    assert code == 2
    assert "code" in json.loads(err)


def test_perceive_report_and_matrix(scene, capsys):
    tmp, ply, cams, _ = scene
    csv = tmp / "levels.csv"
    code, out, _ = run(["perceive", "--input", ply, "--cameras", cams, "--levels", 4,
                        "--base-resolution", 2.5, "--level", 2, "--level-csv", csv], capsys)
    assert code == 0
    rep = json.loads(out)
    assert len(rep["per_camera_counts"]) == 4
    assert rep["tau_new"] == pytest.approx((1 + rep["mean_coverage"]) * rep["tau_old"])
    rows = csv.read_text().splitlines()
    assert rows[0] == "anchor,camera,level"
    assert {int(r.split(",")[1]) for r in rows[1:]} <= {0, 1, 2, 3}


def test_perceive_camera_seeing_nothing(scene, capsys):
    tmp, ply, _, _ = scene
    cams = tmp / "away.json"
    # looks along +z from above the scene, so nothing is in front of it
    write_cameras([Camera(0, [5, 5, 100], np.eye(3), 40, 40, 32, 24, 64, 48)], cams)
    code, out, _ = run(["perceive", "--input", ply, "--cameras", cams], capsys)
    rep = json.loads(out)
    assert code == 0
    assert rep["mean_coverage"] == 0.0 and rep["tau_new"] == rep["tau_old"] == 0.0


@pytest.mark.parametrize("payload", [
    "not json",
    "[]",
    json.dumps([{"id": 0}]),
    json.dumps([{"id": 0, "center": [0, 0, 0], "rotation": [[2, 0, 0], [0, 1, 0], [0, 0, 1]],
                 "fx": 1, "fy": 1, "cx": 0, "cy": 0, "width": 4, "height": 4}]),
])
def test_invalid_cameras(scene, capsys, payload):
    tmp, ply, _, _ = scene
    cams = tmp / "bad.json"
    cams.write_text(payload)
    code, _, err = run(["perceive", "--input", ply, "--cameras", cams], capsys)
    assert code == 3
    assert json.loads(err)["code"]


def test_compress_decompress_bound(scene, capsys):
    tmp, ply, _, cloud = scene
    box, back = tmp / "c.pyrgs", tmp / "back.ply"
    assert run(["compress", "--input", ply, "--output", box, "--levels", 4, "--base-resolution", 2.5,
                "--q", "opacity=0.01"], capsys)[0] == 0
    assert run(["decompress", "--input", box, "--output", back], capsys)[0] == 0
    rec = read_ply(back)
    assert rec.n == cloud.n and rec.names == cloud.names
    steps = {(s.level, s.name): s.q for s in read_header(box.read_bytes()).segments}
    opacity_q = {q for (l, name), q in steps.items() if name == "opacity"}
    assert opacity_q == {0.01}
    # PLY stores float32, so allow the final rounding of each decoded value
    orig = cloud.channels[:, 0].astype(np.float64)
    err = np.abs(rec.channels[:, 0].astype(np.float64) - orig)
    assert (err <= 0.005 + np.spacing(np.float32(np.abs(orig) + 0.005))).all()


def test_q_scale_monotone(scene, capsys):
    tmp, ply, _, _ = scene
    sizes = []
    for s in (1, 4):
        out = tmp / f"s{s}.pyrgs"
        run(["compress", "--input", ply, "--output", out, "--q-scale", s], capsys)
        code, rep, _ = run(["stats", "--input", out, "--original", ply], capsys)
        assert code == 0
        sizes.append((out.stat().st_size, json.loads(rep)["attribute_mse"]))
    assert sizes[1][0] < sizes[0][0] and sizes[1][1] > sizes[0][1]


def test_stats_empty_cloud(tmp_path, capsys):
    ply = tmp_path / "empty.ply"
    write_ply(GaussianCloud(np.zeros((0, 3), np.float32), np.zeros((0, 1), np.float32), ("a",)), ply)
    box = tmp_path / "e.pyrgs"
    assert run(["compress", "--input", ply, "--output", box, "--levels", 2], capsys)[0] == 0
    code, out, _ = run(["stats", "--input", box, "--original", ply], capsys)
    assert code == 0 and json.loads(out)["num_points"] == 0


def test_codec_errors_exit_4(scene, capsys):
    tmp, ply, _, _ = scene
    junk = tmp / "junk.pyrgs"
    junk.write_bytes(b"definitely not a container")
    code, _, err = run(["decompress", "--input", junk, "--output", tmp / "o.ply"], capsys)
    assert code == 4 and json.loads(err)["code"] == "bad_magic"
    box = tmp / "c.pyrgs"
    run(["compress", "--input", ply, "--output", box], capsys)
    other = tmp / "other.ply"
    write_ply(random_cloud(np.random.default_rng(0), 5), other)
    code, _, err = run(["stats", "--input", box, "--original", other], capsys)
    assert code == 4
    code, _, err = run(["compress", "--input", ply, "--output", box, "--q", "opacity=1e-12"], capsys)
    assert code == 4 and json.loads(err)["channel"] == "opacity"


def test_config_errors_exit_3(scene, capsys):
    _, ply, _, _ = scene
    code, _, err = run(["build", "--input", ply, "--levels", 0], capsys)
    assert code == 3
    code, _, err = run(["compress", "--input", ply, "--output", "x", "--q", "opacity"], capsys)
    assert code == 3 and json.loads(err)["code"]


def test_parse_steps():
    assert parse_steps("opacity=0.1, x=2") == {"opacity": 0.1, "x": 2.0}
    assert parse_steps(None) == {}
    with pytest.raises(ConfigError):
        parse_steps("a=b")


def test_console_entry_point(scene):
    _, ply, _, _ = scene
    res = subprocess.run([sys.executable, "-m", "gspyramid.cli", "build", "--input", str(ply), "--levels", "2"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert json.loads(res.stdout)["num_levels"] == 2
