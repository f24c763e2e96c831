import json

import numpy as np
import pytest

from featslam import cli
from featslam.geometry import Pose
from featslam.metrics import Trajectory, format_trajectory, parse_trajectory


def _cfg(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


@pytest.fixture(scope="module")
def sequences(tmp_path_factory):
    """Two small stable sequences and one with a texture-poor stretch."""
    root = tmp_path_factory.mktemp("seq")
    out = {}
    for name, extra in (("a", ""), ("b", "trajectory_pattern = rpy\n"),
                        ("deg", "degrade_region = 0 0 640 480\ndegrade_start = 8\ndegrade_end = 12\n"
                                "degrade_keep = 4\n")):
        cfg = _cfg(root, f"{name}.cfg", f"seed = 11\nn_frames = 25\nn_dynamic_objects = 1\n{extra}")
        assert cli.main(["simulate", cfg, "--out", str(root / name)]) == 0
        out[name] = root / name
    return out


def _metrics(path):
    header, row = path.read_text().splitlines()
    return dict(zip(header.split(","), map(float, row.split(","))))


def _read_kv(path):
    return {k.strip(): float(v) for k, v in (l.split("=") for l in path.read_text().splitlines())}


def test_simulate_writes_sequence(sequences):
    for n in (cli.SEQ_CFG, cli.SEQ_GT, cli.SEQ_OBS, cli.MANIFEST):
        assert (sequences["a"] / n).is_file()
    assert len(parse_trajectory((sequences["a"] / cli.SEQ_GT).read_text())) == 25


def test_simulate_is_byte_identical(tmp_path):
    cfg = _cfg(tmp_path, "w.cfg", "seed = 2\nn_frames = 6\n")
    for d in ("x", "y"):
        assert cli.main(["simulate", cfg, "--out", str(tmp_path / d)]) == 0
    for n in (cli.SEQ_CFG, cli.SEQ_GT, cli.SEQ_OBS):
        assert (tmp_path / "x" / n).read_bytes() == (tmp_path / "y" / n).read_bytes()


def test_simulate_missing_seed(tmp_path, capsys):
    cfg = _cfg(tmp_path, "w.cfg", "n_frames = 6\n")
    assert cli.main(["simulate", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "seed" in capsys.readouterr().err


def test_simulate_unknown_key(tmp_path, capsys):
    cfg = _cfg(tmp_path, "w.cfg", "seed = 1\nn_frame = 6\n")
    assert cli.main(["simulate", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "n_frame" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_calibrate(sequences, tmp_path):
    ths = []
    for name in ("a", "b"):
        out = tmp_path / f"{name}.aw"
        assert cli.main(["calibrate", str(sequences[name]), "--out", str(out)]) == 0
        v = _read_kv(out)
        assert v["th"] > 0 and v["c_base"] >= 1
        ths.append(v["th"])
    both = tmp_path / "both.aw"
    report = tmp_path / "q.csv"
    assert cli.main(["calibrate", str(sequences["a"]), str(sequences["b"]), "--out", str(both),
                     "--report", str(report)]) == 0
    assert _read_kv(both)["th"] == min(ths)
    assert len(report.read_text().splitlines()) == 1 + 2 * 25
    assert (tmp_path / "both.aw.manifest.json").is_file()


def test_calibrate_single_frame(tmp_path):
    # the simulator needs two frames; keep only the first
    cfg = _cfg(tmp_path, "w.cfg", "seed = 3\nn_frames = 2\n")
    seq = tmp_path / "one"
    assert cli.main(["simulate", cfg, "--out", str(seq)]) == 0
    gt = (seq / cli.SEQ_GT).read_text().splitlines(keepends=True)
    data = [i for i, l in enumerate(gt) if not l.startswith("#")]
    (seq / cli.SEQ_GT).write_text("".join(gt[: data[1]]))
    obs = (seq / cli.SEQ_OBS).read_text().splitlines(keepends=True)
    (seq / cli.SEQ_OBS).write_text("".join(l for l in obs if l.startswith(("#", "0 "))))
    assert len(parse_trajectory((seq / cli.SEQ_GT).read_text())) == 1
    assert cli.main(["calibrate", str(tmp_path / "one"), "--out", str(tmp_path / "one.aw")]) == 0
    assert _read_kv(tmp_path / "one.aw")["th"] > 0


def test_calibrate_missing_sequence(tmp_path):
    assert cli.main(["calibrate", str(tmp_path / "nope"), "--out", str(tmp_path / "x.aw")]) == 2


@pytest.fixture(scope="module")
def calibration(sequences, tmp_path_factory):
    out = tmp_path_factory.mktemp("aw") / "a.aw"
    assert cli.main(["calibrate", str(sequences["a"]), "--out", str(out)]) == 0
    return out


def test_run_outputs(sequences, calibration, tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["run", str(sequences["deg"]), "--awareness", str(calibration), "--out", str(out)]) == 0
    assert "ATE" in capsys.readouterr().out
    assert np.isfinite(_metrics(out / "metrics.csv")["ate_rmse"])
    assert len(parse_trajectory((out / "trajectory.txt").read_text())) == 25
    manifest = json.loads((out / cli.MANIFEST).read_text())
    assert manifest["command"] == "run" and set(manifest["outputs"]) >= {"trajectory.txt", "frames.csv"}
    assert (out / "trace.log").read_text().startswith("frame stage")


def test_run_conflicting_line_flags(sequences, calibration, tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(["run", str(sequences["a"]), "--awareness", str(calibration), "--out", str(tmp_path),
                  "--always-lines", "--never-lines"])
    assert exc.value.code == 2


def test_run_without_calibration(sequences, tmp_path, capsys):
    assert cli.main(["run", str(sequences["a"]), "--out", str(tmp_path / "r")]) == 2
    assert "c_base" in capsys.readouterr().err


def test_run_config_overrides(sequences, calibration, tmp_path):
    bad = _cfg(tmp_path, "p.cfg", "window_size = 1\n")
    assert cli.main(["run", str(sequences["a"]), "--awareness", str(calibration), "--config", bad,
                     "--out", str(tmp_path / "r")]) == 2


def test_replay_detects_changed_output(sequences, calibration, tmp_path):
    out = tmp_path / "run"
    assert cli.main(["run", str(sequences["a"]), "--awareness", str(calibration), "--out", str(out)]) == 0
    m = json.loads((out / cli.MANIFEST).read_text())
    m["outputs"]["trajectory.txt"] = "0" * 64
    (out / cli.MANIFEST).write_text(json.dumps(m))
    assert cli.main(["replay", str(out / cli.MANIFEST), "--out", str(tmp_path / "again")]) == 1


def test_replay_simulate(tmp_path):
    cfg = _cfg(tmp_path, "w.cfg", "seed = 2\nn_frames = 5\n")
    assert cli.main(["simulate", cfg, "--out", str(tmp_path / "s")]) == 0
    assert cli.main(["replay", str(tmp_path / "s" / cli.MANIFEST), "--out", str(tmp_path / "t")]) == 0


def _traj(tmp_path, name, rows):
    t = Trajectory([(ts, Pose(np.eye(3), xyz)) for ts, xyz in rows])
    p = tmp_path / name
    p.write_text(format_trajectory(t))
    return str(p)


def test_eval_identical(sequences, tmp_path, capsys):
    gt = str(sequences["a"] / cli.SEQ_GT)
    out = tmp_path / "m.csv"
    assert cli.main(["eval", gt, gt, "--out", str(out)]) == 0
    metrics = _metrics(out)
    for key in ("ate_rmse", "ate_sd", "rpe_t_rmse", "rpe_t_sd"):
        assert abs(metrics[key]) < 1e-9
    capsys.readouterr()


def test_eval_two_pose_example(tmp_path, capsys):
    gt = _traj(tmp_path, "gt.txt", [(0.0, [0, 0, 0]), (1.0, [1.0, 0, 0])])
    est = _traj(tmp_path, "est.txt", [(0.0, [0, 0, 0]), (1.0, [1.2, 0, 0])])
    assert cli.main(["eval", est, gt, "--no-align"]) == 0
    assert "0.1414" in capsys.readouterr().out


def test_eval_disjoint_timestamps(tmp_path):
    gt = _traj(tmp_path, "gt.txt", [(0.0, [0, 0, 0]), (1.0, [1, 0, 0])])
    est = _traj(tmp_path, "est.txt", [(5.0, [0, 0, 0]), (6.0, [1, 0, 0])])
    assert cli.main(["eval", est, gt]) == 2


def test_eval_parse_error_names_line(tmp_path, capsys):
    gt = _traj(tmp_path, "gt.txt", [(0.0, [0, 0, 0]), (1.0, [1, 0, 0])])
    bad = tmp_path / "bad.txt"
    bad.write_text("# header\n0.0 0 0 0 0 0 0 1\n1.0 0 0 oops 0 0 0 1\n")
    assert cli.main(["eval", str(bad), gt]) == 2
    assert "3" in capsys.readouterr().err
