import json

import numpy as np
import pytest

from builders import checkerboard_image, smooth_random_scene
from flatsplat.cli import main
from flatsplat.images import image_load, image_save
from flatsplat.metrics import psnr
from flatsplat.scene import Mode, scene_load, scene_save


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """One small end-to-end training run shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    rng = np.random.default_rng(0)
    target = checkerboard_image(rng, 48, 48)
    image_path = root / "target.png"
    image_save(target, image_path)
    code = main(["train", "--image", str(image_path), "--mode", "2d",
                 "--n-init", "200", "--iters", "150", "--mirror", "on",
                 "--out-dir", str(root), "--out", "scene.json",
                 "--log", "metrics.jsonl", "--seed", "7"])
    assert code == 0
    return root, image_path


def test_train_produces_scene_and_log(trained):
    root, _ = trained
    assert (root / "scene.json").exists()
    lines = (root / "metrics.jsonl").read_text().splitlines()
    assert lines
    rec = json.loads(lines[0])
    assert {"iteration", "loss", "psnr"} <= set(rec)
    # mirror training logs both loss terms
    assert "loss_primary" in rec and "loss_mirror" in rec


def test_missing_image_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train"])
    assert exc.value.code == 2


def test_eval_consistent_with_training_log(trained, capsys):
    root, image_path = trained
    code = main(["eval", "--scene", str(root / "scene.json"),
                 "--image", str(image_path)])
    assert code == 0
    report = json.loads(capsys.readouterr().out.strip())
    logged = [json.loads(l) for l in (root / "metrics.jsonl")
              .read_text().splitlines()][-1]
    assert abs(report["psnr"] - logged["psnr"]) < 0.1


def test_eval_unrelated_image_low_psnr(trained, capsys, tmp_path):
    root, _ = trained
    rng = np.random.default_rng(99)
    other = 1.0 - checkerboard_image(rng, 48, 48)
    other_path = tmp_path / "other.png"
    image_save(other, other_path)
    code = main(["eval", "--scene", str(root / "scene.json"),
                 "--image", str(other_path)])
    assert code == 0
    report = json.loads(capsys.readouterr().out.strip())
    assert report["psnr"] < 20.0


def test_eval_malformed_scene_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{broken")
    code = main(["eval", "--scene", str(bad), "--image", str(bad)])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_render_empty_scene_is_background(tmp_path, capsys):
    from flatsplat.scene import CameraRig, Scene

    scene = Scene.empty(background=(0.3, 0.6, 0.9),
                        camera=CameraRig(resolution=(24, 16)))
    scene_path = tmp_path / "empty.json"
    scene_save(scene, scene_path)
    code = main(["render", "--scene", str(scene_path),
                 "--out-dir", str(tmp_path), "--out", "bg.png"])
    assert code == 0
    img = image_load(tmp_path / "bg.png")
    assert img.shape == (16, 24, 3)
    expect = np.round(np.array([0.3, 0.6, 0.9]) * 255) / 255
    assert np.allclose(img, expect)


def test_export_import_round_trip_keeps_psnr(trained, tmp_path, capsys):
    root, image_path = trained
    scene_path = root / "scene.json"
    assert main(["export", "--scene", str(scene_path),
                 "--out-dir", str(tmp_path), "--out", "soup.obj"]) == 0
    assert main(["import", "--scene", str(scene_path),
                 "--mesh", str(tmp_path / "soup.obj"),
                 "--out-dir", str(tmp_path), "--out", "back.json"]) == 0
    capsys.readouterr()
    assert main(["eval", "--scene", str(scene_path),
                 "--image", str(image_path)]) == 0
    before = json.loads(capsys.readouterr().out.strip())
    assert main(["eval", "--scene", str(tmp_path / "back.json"),
                 "--image", str(image_path)]) == 0
    after = json.loads(capsys.readouterr().out.strip())
    assert abs(before["psnr"] - after["psnr"]) < 0.1


def test_edit_applies_translation(trained, tmp_path, capsys):
    root, _ = trained
    assert main(["edit", "--scene", str(root / "scene.json"),
                 "--translate", "0.2,0,0.1",
                 "--out-dir", str(tmp_path), "--out", "moved.json"]) == 0
    before = scene_load(root / "scene.json")
    after = scene_load(tmp_path / "moved.json")
    assert np.allclose(after.means, before.means + [0.2, 0, 0.1], atol=1e-9)


def test_animate_identity_track_writes_identical_frames(tmp_path, capsys):
    rng = np.random.default_rng(1)
    scene = smooth_random_scene(rng, n=6, mode=Mode.TWO_D)
    scene_path = tmp_path / "scene.json"
    scene_save(scene, scene_path)
    track = {"keyframes": [{"time": 0.0, "selection": {"all": True}},
                           {"time": 1.0, "selection": {"all": True}}]}
    track_path = tmp_path / "track.json"
    track_path.write_text(json.dumps(track))
    code = main(["animate", "--scene", str(scene_path),
                 "--track", str(track_path), "--frames", "10",
                 "--out-dir", str(tmp_path / "frames")])
    assert code == 0
    frames = sorted((tmp_path / "frames").glob("out_*.png"))
    assert len(frames) == 10
    first = frames[0].read_bytes()
    assert all(f.read_bytes() == first for f in frames[1:])


def test_simulate_writes_frames_and_trajectories(tmp_path, capsys):
    rng = np.random.default_rng(2)
    scene = smooth_random_scene(rng, n=5, mode=Mode.TWO_D)
    scene.scales[:, 1:] *= 0.1
    scene_path = tmp_path / "scene.json"
    scene_save(scene, scene_path)
    code = main(["simulate", "--scene", str(scene_path), "--frames", "3",
                 "--substeps", "3", "--out-dir", str(tmp_path / "sim"),
                 "--traj", "traj.csv", "--traj-count", "4"])
    assert code == 0
    assert len(list((tmp_path / "sim").glob("out_*.png"))) == 3
    rows = (tmp_path / "sim" / "traj.csv").read_text().splitlines()
    assert rows[0] == "frame,particle,x,z"
    assert len(rows) == 1 + 3 * 4


def test_simulate_rejects_non_twod(tmp_path, capsys):
    rng = np.random.default_rng(3)
    scene = smooth_random_scene(rng, n=4, mode=Mode.AMORPHOUS)
    scene_path = tmp_path / "scene.json"
    scene_save(scene, scene_path)
    code = main(["simulate", "--scene", str(scene_path),
                 "--out-dir", str(tmp_path)])
    assert code == 1
    assert "2d" in capsys.readouterr().err
