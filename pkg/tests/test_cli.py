import csv
import subprocess
import sys

import numpy as np
import pytest

from splatdistill.cli import main
from splatdistill.imageio import read_image, write_image
from splatdistill.ply import load_pointcloud, save_pointcloud
from splatdistill.scene import sphere_init


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("fx")
    assert main(["fixture", "--out", str(out), "--views", "4", "--resolution", "24"]) == 0
    return out


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_help_exits_zero():
    proc = subprocess.run([sys.executable, "-m", "splatdistill.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "optimize" in proc.stdout


def test_bad_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["render", "--nope"])
    assert exc.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_init_scene_sphere(tmp_path, capsys):
    out = tmp_path / "s.ply"
    assert main(["init-scene", "--count", "500", "-o", str(out)]) == 0
    assert capsys.readouterr().out.strip() == "500"
    assert len(load_pointcloud(out)) == 500


def test_init_scene_ply_passthrough(tmp_path):
    src, dst = tmp_path / "a.ply", tmp_path / "b.ply"
    save_pointcloud(sphere_init(12, 0.5, 1, sh_order=1), src)
    assert main(["init-scene", "--mode", "ply", "--input", str(src), "-o", str(dst)]) == 0
    a, b = load_pointcloud(src), load_pointcloud(dst)
    for name in a.PARAMS:
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


def test_init_scene_bad_path(tmp_path, capsys):
    code = main(["init-scene", "--mode", "ply", "--input", str(tmp_path / "none.ply"), "-o", str(tmp_path / "x.ply")])
    assert code == 2 and "error" in capsys.readouterr().err


def test_optimize_smoke_and_determinism(tmp_path, fixture_dir):
    args = ["optimize", "--views", str(fixture_dir / "smooth"), "--views-2d", str(fixture_dir / "detailed"),
            "--iterations", "10", "--seed", "5", "--count", "40"]
    assert main(args + ["--out", str(tmp_path / "r1")]) == 0
    assert main(args + ["--out", str(tmp_path / "r2")]) == 0
    rows = _rows(tmp_path / "r1" / "report.csv")
    assert rows[0] == ["iter", "setting", "t2", "t3", "loss2d", "loss3d"] and len(rows) == 11
    for name in ("report.csv", "final.ply", "summary.txt"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()


def test_optimize_checkpoints_and_flags(tmp_path, fixture_dir):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("checkpoint_every = 2\nresolution = 24\n")
    code = main(["optimize", "--views", str(fixture_dir / "exact"), "--config", str(cfg), "--iterations", "4",
                 "--setting", "d", "--fsd-mode", "literal", "--count", "30", "--out", str(tmp_path / "r")])
    assert code == 0
    assert sorted(p.name for p in (tmp_path / "r").glob("checkpoint_*.ply")) == [
        "checkpoint_00002.ply", "checkpoint_00004.ply"]
    assert {r[1] for r in _rows(tmp_path / "r" / "report.csv")[1:]} == {"d"}


def test_optimize_missing_views(tmp_path):
    assert main(["optimize", "--views", str(tmp_path / "missing"), "--out", str(tmp_path / "o")]) == 2


def test_optimize_unknown_config_key(tmp_path, fixture_dir):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("iterations = 3\nlearning_rate = 1\n")
    assert main(["optimize", "--views", str(fixture_dir / "exact"), "--config", str(cfg), "--out", str(tmp_path)]) == 1


def test_optimize_invalid_config_value(tmp_path, fixture_dir):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("iterations = 0\n")
    assert main(["optimize", "--views", str(fixture_dir / "exact"), "--config", str(cfg), "--out", str(tmp_path)]) == 1


def test_render_orbit(tmp_path, fixture_dir):
    out = tmp_path / "views"
    assert main(["render", "--scene", str(fixture_dir / "fixture.ply"), "--views", "4", "--resolution", "16",
                 "--strip", "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == [
        "strip.png", "view_000.png", "view_001.png", "view_002.png", "view_003.png"]
    assert read_image(out / "strip.png").shape == (16, 64, 3)


def test_render_empty_scene(tmp_path):
    p = tmp_path / "empty.ply"
    p.write_text("ply\nformat ascii 1.0\nelement vertex 0\nproperty float x\nend_header\n")
    assert main(["render", "--scene", str(p), "--out", str(tmp_path / "o")]) == 2


def test_spectrum_single_and_pair(tmp_path, rng):
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    write_image(a, rng.uniform(size=(16, 16, 3)))
    write_image(b, rng.uniform(size=(16, 16, 3)))
    assert main(["spectrum", str(a), "--out", str(tmp_path / "one")]) == 0
    assert sorted(p.name for p in (tmp_path / "one").iterdir()) == ["spectrum.csv", "spectrum.png"]
    assert main(["spectrum", str(a), str(b), "--out", str(tmp_path / "two")]) == 0
    assert len(list((tmp_path / "two").iterdir())) == 4


def test_spectrum_of_constant_image_is_dc_only(tmp_path):
    p = tmp_path / "c.png"
    write_image(p, np.full((12, 12, 3), 0.4))
    assert main(["spectrum", str(p), "--bins", "5", "--out", str(tmp_path / "o")]) == 0
    rows = _rows(tmp_path / "o" / "spectrum.csv")
    assert rows[0] == ["bin", "value"]
    values = [float(r[1]) for r in rows[1:]]
    assert values[0] > 0 and all(v == pytest.approx(0, abs=1e-12) for v in values[1:])


def test_spectrum_shape_mismatch(tmp_path, rng):
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    write_image(a, rng.uniform(size=(8, 8, 3)))
    write_image(b, rng.uniform(size=(8, 9, 3)))
    assert main(["spectrum", str(a), str(b), "--out", str(tmp_path / "o")]) == 1


def test_ablate_smoke_is_deterministic(tmp_path):
    args = ["ablate", "--iterations", "3", "--seed", "1", "--threads", "1"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    rows = _rows(tmp_path / "a" / "ablation.csv")
    assert rows[0] == ["setting", "chamfer", "psnr", "high_band_energy"]
    assert [r[0] for r in rows[1:]] == list("abcde")
    assert (tmp_path / "a" / "ablation.csv").read_bytes() == (tmp_path / "b" / "ablation.csv").read_bytes()
    assert "| e |" in (tmp_path / "a" / "ablation.md").read_text()


def test_ablate_rejects_bad_settings(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["ablate", "--settings", "xyz", "--out", str(tmp_path)])
    assert exc.value.code == 1
