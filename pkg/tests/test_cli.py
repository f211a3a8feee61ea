import json
import subprocess
import sys

import pytest

from mobiattn.checkpoint import load_checkpoint
from mobiattn.cli import main
from mobiattn.imageio import read_image

CONFIG = """\
model.input.height=16
model.input.width=16
train.epochs=3
train.batch_size=8
train.seed=1
augment.rotation_max_deg=10
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    ws = tmp_path_factory.mktemp("cli")
    (ws / "run.cfg").write_text(CONFIG)
    assert main(["synth", "--classes", "3", "--per-class", "20", "--size", "16", "--seed", "2",
                 "--out", str(ws / "data")]) == 0
    assert main(["train", "--config", str(ws / "run.cfg"), "--data", str(ws / "data"),
                 "--out", str(ws / "model.ckpt"), "--history", str(ws / "history.csv")]) == 0
    return ws


def run(*argv):
    return main([str(a) for a in argv])


def test_train_artifacts(workspace):
    ckpt = load_checkpoint(workspace / "model.ckpt")
    assert ckpt.spec.class_names == ("class_00", "class_01", "class_02")
    assert ckpt.spec.input_shape == (3, 16, 16) and ckpt.spec.norm_mean is not None
    lines = (workspace / "history.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_acc,val_acc,train_loss,val_loss" and len(lines) == 4


def test_train_is_byte_reproducible(workspace, tmp_path):
    assert run("train", "--config", workspace / "run.cfg", "--data", workspace / "data",
               "--out", tmp_path / "again.ckpt", "--history", tmp_path / "again.csv") == 0
    assert (tmp_path / "again.ckpt").read_bytes() == (workspace / "model.ckpt").read_bytes()
    assert (tmp_path / "again.csv").read_bytes() == (workspace / "history.csv").read_bytes()


def test_eval_and_report(workspace, capsys):
    args = ["eval", "--ckpt", workspace / "model.ckpt", "--data", workspace / "data",
            "--config", workspace / "run.cfg"]
    assert run(*args, "--report", workspace / "eval.json", "--roc", workspace / "roc_eval.csv") == 0
    assert "confusion (rows actual, cols predicted)" in capsys.readouterr().out
    doc = json.loads((workspace / "eval.json").read_text())
    assert doc["split"] == "test" and len(doc["per_class"]) == 3
    assert sum(map(sum, doc["confusion"]["rows_actual_cols_predicted"])) == 12
    assert 0 <= doc["accuracy"] <= 1 and len(doc["roc"]) == 3
    first = (workspace / "eval.json").read_bytes()
    assert run(*args, "--report", workspace / "eval2.json") == 0
    assert (workspace / "eval2.json").read_bytes() == first

    assert run("report", "--history", workspace / "history.csv", "--eval-report", workspace / "eval.json",
               "--out", workspace / "curves") == 0
    acc = (workspace / "curves" / "accuracy_vs_epoch.csv").read_text().splitlines()
    assert acc[0] == "epoch,train_acc,val_acc" and len(acc) == 4
    assert (workspace / "curves" / "loss_vs_epoch.csv").exists()
    assert (workspace / "curves" / "roc.csv").read_text() == (workspace / "roc_eval.csv").read_text()


def test_eval_train_split(workspace):
    assert run("eval", "--ckpt", workspace / "model.ckpt", "--data", workspace / "data",
               "--config", workspace / "run.cfg", "--split", "train", "--report", workspace / "tr.json") == 0
    doc = json.loads((workspace / "tr.json").read_text())
    assert sum(map(sum, doc["confusion"]["rows_actual_cols_predicted"])) == 48


def test_predict(workspace, capsys):
    img = sorted((workspace / "data" / "class_01").iterdir())[0]
    assert run("predict", "--ckpt", workspace / "model.ckpt", "--image", img) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].split()[0] in ("class_00", "class_01", "class_02")
    probs = [float(line.split(":")[1]) for line in out[1:]]
    assert len(probs) == 3 and abs(sum(probs) - 1) < 1e-5


def test_class_count_mismatch_exits_2(workspace, tmp_path, capsys):
    assert run("synth", "--classes", "2", "--per-class", "4", "--size", "8", "--out", tmp_path / "two") == 0
    assert run("eval", "--ckpt", workspace / "model.ckpt", "--data", tmp_path / "two") == 2
    assert "checkpoint expects 3" in capsys.readouterr().err


def test_class_name_mismatch_exits_2(workspace, tmp_path):
    for name in ("a", "b", "c"):
        src = workspace / "data" / "class_00"
        (tmp_path / name).mkdir()
        for p in sorted(src.iterdir())[:3]:
            (tmp_path / name / p.name).write_bytes(p.read_bytes())
    assert run("eval", "--ckpt", workspace / "model.ckpt", "--data", tmp_path) == 2


def test_data_errors_exit_2(workspace, tmp_path):
    assert run("eval", "--ckpt", tmp_path / "missing.ckpt", "--data", workspace / "data") == 2
    (tmp_path / "bad.ckpt").write_bytes(b"nope")
    assert run("eval", "--ckpt", tmp_path / "bad.ckpt", "--data", workspace / "data") == 2
    assert run("train", "--data", tmp_path / "nowhere", "--out", tmp_path / "x.ckpt") == 2
    assert run("predict", "--ckpt", workspace / "model.ckpt", "--image", tmp_path / "none.ppm") == 2


def test_usage_errors_exit_1(workspace, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["train"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1
    (tmp_path / "bad.cfg").write_text("model.colour=red\n")
    assert run("flops", "--config", tmp_path / "bad.cfg") == 1
    assert run("flops", "--time", "2") == 1
    assert run("synth", "--classes", "1", "--out", tmp_path / "s") == 1


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_error_exits_3(workspace, tmp_path):
    (tmp_path / "hot.cfg").write_text(CONFIG.replace("train.epochs=3", "train.epochs=2") +
                                      "train.learning_rate=1e300\n")
    assert run("train", "--config", tmp_path / "hot.cfg", "--data", workspace / "data",
               "--out", tmp_path / "hot.ckpt") == 3


def test_flops_matches_golden(tmp_path, capsys):
    from pathlib import Path
    assert run("flops", "--csv", tmp_path / "cost.csv") == 0
    golden = Path(__file__).parent / "golden" / "default_cost.csv"
    assert (tmp_path / "cost.csv").read_text() == golden.read_text()
    out = capsys.readouterr().out
    assert "units: params = scalar parameters; MACs = multiply-accumulates" in out


def test_flops_timing(workspace, capsys):
    assert run("flops", "--config", workspace / "run.cfg", "--time", "3") == 0
    assert "median" in capsys.readouterr().out


def test_augment_preview(workspace, tmp_path):
    img = sorted((workspace / "data" / "class_00").iterdir())[0]
    assert run("augment-preview", "--config", workspace / "run.cfg", "--image", img,
               "--out-dir", tmp_path / "views", "--index", 3) == 0
    names = sorted(p.name for p in (tmp_path / "views").iterdir())
    assert names == ["composed.ppm", "hflip.ppm", "photometric.ppm", "rotate.ppm", "scale.ppm"]
    assert read_image(tmp_path / "views" / "hflip.ppm").shape == (3, 16, 16)
    first = (tmp_path / "views" / "composed.ppm").read_bytes()
    run("augment-preview", "--config", workspace / "run.cfg", "--image", img, "--out-dir", tmp_path / "v2",
        "--index", 3)
    assert (tmp_path / "v2" / "composed.ppm").read_bytes() == first


def test_synth_is_byte_reproducible(tmp_path):
    for d in ("a", "b"):
        assert run("synth", "--classes", "2", "--per-class", "3", "--size", "8", "--seed", "7",
                   "--channels", "1", "--out", tmp_path / d) == 0
    for p in (tmp_path / "a").rglob("*.pgm"):
        assert p.read_bytes() == (tmp_path / "b" / p.relative_to(tmp_path / "a")).read_bytes()


def test_ablate(workspace, tmp_path, capsys):
    cfg = tmp_path / "abl.cfg"
    cfg.write_text(CONFIG.replace("train.epochs=3", "train.epochs=1") + "augment.enabled=false\n")
    assert run("ablate", "--config", cfg, "--data", workspace / "data", "--out", tmp_path / "abl.csv") == 0
    rows = (tmp_path / "abl.csv").read_text().splitlines()
    assert [r.split(",")[0] for r in rows[1:]] == ["none", "channel", "spatial", "full"]
    out = capsys.readouterr().out
    assert "full" in out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "mobiattn", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip() == "0.1.0"
