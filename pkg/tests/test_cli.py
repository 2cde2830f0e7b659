import json

import pandas as pd
import pytest

from config.run_config import parse_run_config
from main import ATTENTION_DIR, BENCH_FILE, EVAL_FILE, SUMMARY_FILE, main
from src.bench import AIAModel, load_checkpoint


@pytest.fixture
def run_dir(tmp_path):
    return tmp_path / "run"


def test_generate_is_byte_reproducible(config_file, tmp_path):
    path = config_file()
    assert main(["generate", "--config", str(path), "--out", str(tmp_path / "a.bin")]) == 0
    assert main(["generate", "--config", str(path), "--out", str(tmp_path / "b.bin")]) == 0
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()

    assert main(["generate", "--config", str(path), "--seed", "7", "--out", str(tmp_path / "c.bin")]) == 0
    assert (tmp_path / "a.bin").read_bytes() != (tmp_path / "c.bin").read_bytes()


def test_generate_defaults_into_output_dir(config_file, run_dir):
    assert main(["generate", "--config", str(config_file())]) == 0
    assert (run_dir / "dataset.bin").exists()


def test_empty_world_generates(config_file, tmp_path):
    path = config_file(world={"n_videos": 0})
    assert main(["generate", "--config", str(path), "--out", str(tmp_path / "empty.bin")]) == 0


def test_missing_field_is_a_config_error(tmp_path, capsys):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"world": {}, "ia": {}}), encoding="utf-8")
    assert main(["train", "--config", str(path)]) == 1
    assert "trainer" in capsys.readouterr().err


def test_unknown_field_and_bad_json_are_config_errors(tmp_path, config_file):
    path = config_file(learning_rate=0.1)
    assert main(["train", "--config", str(path)]) == 1

    bad = tmp_path / "bad.json"
    bad.write_text("{", encoding="utf-8")
    assert main(["train", "--config", str(bad)]) == 1
    assert main(["train", "--config", str(tmp_path / "nope.json")]) == 1


def test_usage_errors_exit_one(config_file):
    assert main([]) == 1
    assert main(["train"]) == 1
    assert main(["attn", "--config", str(config_file())]) == 1


def test_train_with_zero_iterations(config_file, run_dir):
    path = config_file(trainer={"iters": 0})
    assert main(["train", "--config", str(path)]) == 0
    summary = json.loads((run_dir / SUMMARY_FILE).read_text())
    assert summary["iterations"] == 0
    assert summary["final_loss"] is None
    assert (run_dir / "checkpoint.bin").exists()
    assert (run_dir / "pool.bin").exists()

    config = parse_run_config(json.loads(path.read_text()))
    initial = AIAModel.build(config.ia, config.world.d_in, config.capacity, config.window, config.seed)
    model, velocities, meta = load_checkpoint(run_dir / "checkpoint.bin")
    saved = model.state_arrays()
    expected = initial.state_arrays()
    assert sorted(saved) == sorted(expected)
    for name, values in expected.items():
        assert saved[name].tobytes() == values.tobytes(), name
    assert all(not v.any() for v in velocities.values())
    assert meta["iteration"] == 0


def test_joint_window_guard_exits_one(config_file, capsys):
    assert main(["train", "--config", str(config_file(mode="joint", window=5))]) == 1
    assert "guard" in capsys.readouterr().err


def test_train_resume_and_eval(config_file, run_dir):
    path = config_file(trainer={"iters": 2})
    assert main(["train", "--config", str(path)]) == 0

    longer = config_file(trainer={"iters": 4})
    assert main(["train", "--config", str(longer), "--resume"]) == 0
    assert json.loads((run_dir / SUMMARY_FILE).read_text())["iterations"] == 4
    assert len(pd.read_csv(run_dir / "metrics.csv")) == 4

    assert main(["eval", "--config", str(longer)]) == 0
    first = (run_dir / EVAL_FILE).read_bytes()
    assert main(["eval", "--config", str(longer)]) == 0
    assert (run_dir / EVAL_FILE).read_bytes() == first

    report = json.loads(first)
    assert report["videos"] == [3]
    assert len(report["per_class_ap"]) == 4


def test_interrupted_train_matches_uninterrupted_bytes(config_file, tmp_path):
    straight, split = str(tmp_path / "straight"), str(tmp_path / "split")
    assert main(["train", "--config", str(config_file(trainer={"iters": 4})), "--output-dir", straight]) == 0

    assert main(["train", "--config", str(config_file(trainer={"iters": 2})), "--output-dir", split]) == 0
    resume = ["train", "--config", str(config_file(trainer={"iters": 4})), "--output-dir", split, "--resume"]
    assert main(resume) == 0

    for name in ("checkpoint.bin", "pool.bin", "metrics.csv"):
        assert (tmp_path / "split" / name).read_bytes() == (tmp_path / "straight" / name).read_bytes(), name


@pytest.mark.slow
def test_eval_after_converged_noiseless_run(config_file, run_dir):
    path = config_file(
        world={"n_videos": 16, "d_in": 20, "noise_sigma": 0.0},
        ia={"d": 16},
        trainer={"iters": 2000, "log_every": 500},
    )
    assert main(["train", "--config", str(path)]) == 0
    assert main(["eval", "--config", str(path)]) == 0

    report = json.loads((run_dir / EVAL_FILE).read_text())
    assert report["per_class_ap"][0] >= 0.99


def test_eval_without_checkpoint_exits_two(config_file, tmp_path):
    path = config_file()
    assert main(["eval", "--config", str(path), "--checkpoint", str(tmp_path / "missing.bin")]) == 2


def test_eval_on_generated_dataset_file(config_file, run_dir, tmp_path):
    path = config_file(trainer={"iters": 1})
    assert main(["generate", "--config", str(path), "--out", str(tmp_path / "data.bin")]) == 0
    assert main(["train", "--config", str(path)]) == 0
    assert main(["eval", "--config", str(path), "--dataset", str(tmp_path / "data.bin")]) == 0
    assert (run_dir / EVAL_FILE).exists()


def test_attention_dump(config_file, run_dir):
    path = config_file(trainer={"iters": 1})
    assert main(["train", "--config", str(path)]) == 0
    assert main(["attn", "--config", str(path), "--clip", "3:3"]) == 0

    files = sorted(p.name for p in (run_dir / ATTENTION_DIR).iterdir())
    assert files == ["attn_00_P.csv", "attn_01_O.csv", "attn_02_M.csv"]

    for name in files:
        table = pd.read_csv(run_dir / ATTENTION_DIR / name, index_col=0)
        assert list(table.index) == ["q0", "q1", "q2"]
        if len(table.columns):
            assert ((table.sum(axis=1) - 1.0).abs() < 1e-9).all()

    memory = pd.read_csv(run_dir / ATTENTION_DIR / "attn_02_M.csv", index_col=0)
    # five clips of capacity 4 with three persons each
    assert len(memory.columns) == 15
    assert "k3" not in memory.columns


def test_attention_bad_selector(config_file):
    path = config_file(trainer={"iters": 0})
    assert main(["train", "--config", str(path)]) == 0
    assert main(["attn", "--config", str(path), "--clip", "three"]) == 1
    assert main(["attn", "--config", str(path), "--clip", "9:1"]) == 2


def test_bench_writes_csv(config_file, run_dir):
    assert main(["bench", "--config", str(config_file())]) == 0
    frame = pd.read_csv(run_dir / BENCH_FILE)
    assert list(frame["mode"]) == ["amu", "amu", "joint", "joint"]
    assert list(frame["window"]) == [1, 5, 1, 2]
