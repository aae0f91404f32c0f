import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from vec2vec import data_io
from vec2vec.cli import main
from vec2vec.translator import load_checkpoint

WORLD = {"latent_dim": 3, "d1": 6, "d2": 5, "n_train_1": 40, "n_train_2": 40, "n_eval": 12}
TRAIN = {"latent_dim": 4, "adapter_width": 6, "backbone_blocks": 1, "disc_depth": 1, "disc_width": 5,
         "batch_size": 8}


@pytest.fixture
def world(tmp_path):
    cfg = tmp_path / "world.json"
    cfg.write_text(json.dumps(WORLD))
    out = tmp_path / "w"
    assert main(["synth", "--config", str(cfg), "--out", str(out), "--seed", "1"]) == 0
    return out


@pytest.fixture
def train_cfg(tmp_path):
    path = tmp_path / "train.json"
    path.write_text(json.dumps(TRAIN))
    return path


def test_synth_files_and_checksums(world, tmp_path):
    names = {p.name for p in world.iterdir()}
    assert {"train_u.emb", "train_v.emb", "eval_u.emb", "eval_v.emb", "manifest.json"} <= names
    manifest = json.loads((world / "manifest.json").read_text())
    assert manifest["command"] == "synth" and manifest["seed"] == 1
    cfg = tmp_path / "world.json"
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "w2"), "--seed", "1"]) == 0
    again = json.loads((tmp_path / "w2" / "manifest.json").read_text())
    assert sorted(manifest["checksums"].values()) == sorted(again["checksums"].values())


def test_synth_refuses_nonempty_dir_and_bad_config(world, tmp_path):
    assert main(["synth", "--out", str(world)]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"latent_dim": 99}))
    assert main(["synth", "--config", str(bad), "--out", str(tmp_path / "nope")]) == 1
    assert not (tmp_path / "nope").exists()


def test_train_translate_eval(world, train_cfg, tmp_path):
    ckpt = tmp_path / "m.v2vc"
    rc = main(["train", str(world / "train_u.emb"), str(world / "train_v.emb"), "--out", str(ckpt),
               "--config", str(train_cfg), "--steps", "3", "--no-cc", "--seed", "2", "--n-seeds", "2"])
    assert rc == 0
    net, discs, extra = load_checkpoint(ckpt)
    assert discs is not None
    assert extra["train_config"]["effective_weights"]["lambda_cc"] == 0.0
    assert extra["train_config"]["seeds"] == [2, 3]
    history = list(csv.DictReader(open(tmp_path / "m.history.csv")))
    assert len(history) == 3
    manifest = json.loads((tmp_path / "m.v2vc.manifest.json").read_text())
    assert manifest["command"] == "train" and str(ckpt) in manifest["checksums"]

    out12, out21 = tmp_path / "t12.emb", tmp_path / "t21.emb"
    assert main(["translate", str(ckpt), str(world / "eval_u.emb"), "--out", str(out12)]) == 0
    assert main(["translate", str(ckpt), str(world / "eval_v.emb"), "--direction", "2to1", "--out", str(out21)]) == 0
    t12, t21 = data_io.load(out12), data_io.load(out21)
    assert t12.vectors.shape == (12, 5) and t21.vectors.shape == (12, 6)
    first = out12.read_bytes()
    main(["translate", str(ckpt), str(world / "eval_u.emb"), "--out", str(out12)])
    assert out12.read_bytes() == first

    report = tmp_path / "r.csv"
    assert main(["eval", str(out12), str(world / "eval_v.emb"), "--report", str(report), "--chunk", "6"]) == 0
    rows = list(csv.DictReader(open(report)))
    assert [r["chunk"] for r in rows] == ["0", "1", "all"]
    assert main(["eval", str(out12), str(world / "eval_u.emb")]) == 1


def test_train_steps_zero_is_initialization(world, train_cfg, tmp_path):
    from vec2vec.trainer import TrainConfig, init_state

    ckpt = tmp_path / "z.v2vc"
    assert main(["train", str(world / "train_u.emb"), str(world / "train_v.emb"), "--out", str(ckpt),
                 "--config", str(train_cfg), "--steps", "0", "--seed", "7"]) == 0
    net, _, _ = load_checkpoint(ckpt)
    ref = init_state(TrainConfig.from_dict({**TRAIN, "steps": 0}), 6, 5, 7).net
    for name, p in ref.named_parameters().items():
        np.testing.assert_array_equal(net.named_parameters()[name].value, p.value.astype(np.float32))


def test_train_nan_exit_code(tmp_path, train_cfg):
    u = tmp_path / "u.emb"
    data_io.save(data_io.EmbeddingSet(np.full((20, 4), np.nan)), u)
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({**TRAIN, "normalize_inputs": False}))
    with np.errstate(all="ignore"):
        assert main(["train", str(u), str(u), "--out", str(tmp_path / "x.v2vc"), "--config", str(cfg),
                     "--steps", "2"]) == 2


def test_eval_identity(world, tmp_path, capsys):
    report = tmp_path / "r.csv"
    assert main(["eval", str(world / "eval_u.emb"), str(world / "eval_u.emb"), "--report", str(report)]) == 0
    rows = list(csv.DictReader(open(report)))
    assert float(rows[-1]["top1"]) == 1.0


def test_baseline_all(world, tmp_path):
    report = tmp_path / "b.csv"
    assert main(["baseline", str(world / "eval_u.emb"), str(world / "eval_v.emb"), "--report", str(report)]) == 0
    rows = list(csv.DictReader(open(report)))
    assert [r["method"] for r in rows] == ["naive", "hungarian", "emd", "sinkhorn", "gw"]
    notes = {r["method"]: r["note"] for r in rows}
    assert notes["naive"] == "not applicable"  # d1 != d2 in this world
    assert list(notes.values()).count("lowest_rank") == 1


def test_baseline_gw_isometric_world(tmp_path):
    cfg = tmp_path / "iso.json"
    cfg.write_text(json.dumps({**WORLD, "d2": 6, "mode": "orthogonal", "inner_jitter": 0.0, "n_eval": 50}))
    out = tmp_path / "iso"
    assert main(["synth", "--config", str(cfg), "--out", str(out)]) == 0
    report = tmp_path / "g.csv"
    assert main(["baseline", str(out / "eval_u.emb"), str(out / "eval_v.emb"), "--solver", "gw",
                 "--report", str(report)]) == 0
    row = list(csv.DictReader(open(report)))[0]
    assert float(row["top1"]) >= 0.95


def test_attr(tmp_path, capsys):
    rng = np.random.default_rng(0)
    docs = rng.standard_normal((6, 4))
    data_io.save(data_io.EmbeddingSet(docs), tmp_path / "d.emb")
    data_io.save(data_io.EmbeddingSet(docs[:3]), tmp_path / "a.emb")
    (tmp_path / "l.json").write_text(json.dumps([0, 1, 2, [0, 1, 2], [0, 1, 2], [0, 1, 2]]))
    report = tmp_path / "attr.csv"
    assert main(["attr", str(tmp_path / "d.emb"), str(tmp_path / "a.emb"), str(tmp_path / "l.json"),
                 "--k", "1", "--report", str(report)]) == 0
    assert "accuracy 1.0000" in capsys.readouterr().out
    assert main(["attr", str(tmp_path / "d.emb"), str(tmp_path / "a.emb"), str(tmp_path / "l.json"),
                 "--k", "9"]) == 1


def test_gradcheck_command(tmp_path):
    report = tmp_path / "g.csv"
    assert main(["gradcheck", "--configs", "3", "--report", str(report)]) == 0
    rows = list(csv.DictReader(open(report)))
    assert {"linear:params", "loss:vsp"} <= {r["check"] for r in rows}
    assert main(["gradcheck", "--configs", "2", "--tol", "0"]) == 2
    assert main(["gradcheck", "--widths", "a-b"]) == 1


def test_usage_errors_exit_1(tmp_path):
    assert main(["eval", str(tmp_path / "missing.emb"), str(tmp_path / "missing.emb")]) == 1
    proc = subprocess.run([sys.executable, "-m", "vec2vec.cli", "frobnicate"], capture_output=True)
    assert proc.returncode == 1
    proc = subprocess.run([sys.executable, "-m", "vec2vec.cli", "synth"], capture_output=True)
    assert proc.returncode == 1
