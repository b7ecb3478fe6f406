import json

import pytest
import yaml

from intformer.cli import git_blob_hash, main
from intformer.config import ConfigError, dump_config, from_dict, load_config
from intformer.training import TrainConfig

SEQ = {"d_model": 16, "n_heads": 2, "ff_dim": 32, "out_dim": 16}
VIDEO = {"stem_width": 4, "widths": [4, 8], "blocks": [1, 1], "out_dim": 16}


def write_config(path, **over):
    cfg = {
        "seed": 0,
        "synth": {"n_tracks": 20, "write_frames": False, "signal": {"speed": 1.0}},
        "data": {"stride": 10, "split": [0.6, 0.2, 0.2]},
        "train": {"epochs": 2},
        "model": {"mask": "0001", "fusion_hidden": 8, "seq": SEQ, "video": VIDEO},
        "preprocess": {"height": 16, "width": 16},
    }
    for k, v in over.items():
        cfg[k] = {**cfg[k], **v} if isinstance(v, dict) and isinstance(cfg.get(k), dict) else v
    path.write_text(yaml.safe_dump(cfg))
    return path


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    cfg = write_config(root / "cfg.yaml")
    assert main(["synth", "--config", str(cfg), "--out", str(root / "data")]) == 0
    return root / "data" / "annotations.jsonl"


# -- config ------------------------------------------------------------------

def test_config_defaults_and_round_trip(tmp_path):
    cfg = load_config(write_config(tmp_path / "c.yaml"))
    assert cfg.model_config().seq.d_model == 16
    assert cfg.model_config().video.height == 16
    again = from_dict(json.loads(dump_config(cfg)))
    assert dump_config(again) == dump_config(cfg)


@pytest.mark.parametrize("bad", [
    {"bogus": 1},
    {"data": {"strid": 2}},
    {"train": {"learning_rate": 0.1}},
    {"model": {"seq": {"layers": 3}}},
    {"synth": {"signal": {"colour": 1.0}}},
    {"profile": "kitti"},
    {"schema": "intformer-experiment/9"},
    {"ablation": {"masks": ["0000"]}},
])
def test_config_rejects(bad):
    with pytest.raises(ConfigError):
        from_dict(bad)


def test_profile_mask_defaults():
    assert from_dict({"profile": "jaad_beh"}).model_config().mask.code == "1100"
    assert from_dict({"profile": "pie"}).model_config().mask.code == "1111"
    t = from_dict({"profile": "pie", "train": {"epochs": 3}}).train_config()
    assert t == TrainConfig.from_profile("pie", epochs=3)


def test_unknown_config_key_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("seed: 1\nlearning_rate: 3\n")
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) != 0
    assert "unknown keys" in capsys.readouterr().err


# -- synth -------------------------------------------------------------------

def test_synth_lines_and_determinism(tmp_path, dataset):
    assert len(dataset.read_text().splitlines()) == 20
    cfg = write_config(tmp_path / "cfg.yaml")
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "again")]) == 0
    assert (tmp_path / "again" / "annotations.jsonl").read_bytes() == dataset.read_bytes()
    manifest = json.loads((tmp_path / "again" / "manifest.json").read_text())
    assert manifest["seed"] == 0 and manifest["command"] == "synth"


def test_synth_prints_class_weight(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.yaml", synth={"n_tracks": 25, "write_frames": False,
                                                      "signal": {"imbalance": 4.0}})
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 0
    out = capsys.readouterr().out
    assert "non-crossing: 20  crossing: 5" in out
    assert "W_c = 4.0000" in out


def test_synth_refuses_existing_output(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.yaml")
    out = tmp_path / "d"
    assert main(["synth", "--config", str(cfg), "--out", str(out)]) == 0
    assert main(["synth", "--config", str(cfg), "--out", str(out)]) != 0
    assert "--force" in capsys.readouterr().err
    assert main(["synth", "--config", str(cfg), "--out", str(out), "--force"]) == 0


def test_synth_writes_frames(tmp_path):
    cfg = write_config(tmp_path / "cfg.yaml", synth={"n_tracks": 2, "write_frames": True})
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 0
    pngs = list((tmp_path / "d" / "frames").rglob("*.png"))
    assert pngs


# -- train / eval --------------------------------------------------------------

def test_train_and_eval(tmp_path, dataset, capsys):
    cfg = write_config(tmp_path / "cfg.yaml", data={"annotations": str(dataset)})
    run = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--out", str(run)]) == 0
    ckpts = sorted(run.glob("synthetic_seed0_epoch*.ckpt"))
    assert len(ckpts) == 1
    assert len((run / "history.jsonl").read_text().splitlines()) == 2
    manifest = json.loads((run / "manifest.json").read_text())
    assert manifest["inputs"]["annotations"]["blob"] == git_blob_hash(dataset)
    assert manifest["config"]["train"] == {"epochs": 2}

    reports = []
    for name in ("e1", "e2"):
        assert main(["eval", "--config", str(cfg), "--checkpoint", str(ckpts[0]),
                     "--out", str(tmp_path / name)]) == 0
        m = json.loads((tmp_path / name / "metrics.json").read_text())
        assert {"accuracy", "auc", "f1"} <= set(m)
        m.pop("sequences_per_second")
        reports.append(m)
    assert reports[0] == reports[1]

    capsys.readouterr()
    assert main(["inspect", str(ckpts[0])]) == 0
    assert json.loads(capsys.readouterr().out)["model_config"]["mask"]["speed"] is True
    assert main(["inspect", str(dataset)]) == 0
    assert "20 tracks" in capsys.readouterr().out


def test_train_pie_profile_groups(tmp_path, dataset, capsys):
    cfg = write_config(tmp_path / "cfg.yaml", data={"annotations": str(dataset)}, train={"epochs": 1},
                       model={"mask": "1001", "fusion_hidden": 8, "seq": SEQ, "video": VIDEO})
    conf = load_config(cfg)
    pie = from_dict({**json.loads(dump_config(conf)), "profile": "pie"}).train_config()
    assert (pie.optimizer, pie.backbone_lr, pie.shift_lr, pie.seq_encoder_lr) == ("adam", 1.1e-3, 6.5e-4, 4.3e-3)
    # images need a frames directory; none given -> clean failure
    rc = main(["train", "--config", str(cfg), "--profile", "pie", "--out", str(tmp_path / "r")])
    assert rc != 0
    assert "frames" in capsys.readouterr().err


def test_train_jaad_beh_default_mask(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"profile": "jaad_beh"}))
    assert load_config(cfg).model_config().mask.code == "1100"


def test_train_missing_annotations(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.yaml", data={"annotations": str(tmp_path / "missing.jsonl")})
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "r")]) != 0
    assert "not found" in capsys.readouterr().err
    assert not (tmp_path / "r").exists()


def test_eval_corrupted_checkpoint(tmp_path, dataset, capsys):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"PK\x03\x04 garbage")
    cfg = write_config(tmp_path / "cfg.yaml", data={"annotations": str(dataset)})
    assert main(["eval", "--config", str(cfg), "--checkpoint", str(bad), "--out", str(tmp_path / "e")]) != 0
    assert "checkpoint" in capsys.readouterr().err


# -- ablate --------------------------------------------------------------------

def test_ablate_custom_masks(tmp_path, dataset):
    cfg = write_config(tmp_path / "cfg.yaml", data={"annotations": str(dataset)}, train={"epochs": 1},
                       ablation={"seeds": [0]})
    out = tmp_path / "abl"
    assert main(["ablate", "--config", str(cfg), "--masks", "speed,pose+speed", "--out", str(out)]) == 0
    lines = (out / "ablation.csv").read_text().splitlines()
    assert lines[0] == "imgs,bbs,pose,speed,acc,auc,f1,seed,status"
    assert [l.split(",")[:4] for l in lines[1:]] == [["0", "0", "0", "1"], ["0", "0", "1", "1"]]
    assert all(l.endswith(",ok") for l in lines[1:])


def test_ablate_partial_failure_rows(tmp_path, dataset, monkeypatch):
    import intformer.evaluation as ev
    real = ev.train

    def flaky(model, split, config, **kw):
        if model.mask.code == "0011":
            raise RuntimeError("boom")
        return real(model, split, config, **kw)

    monkeypatch.setattr(ev, "train", flaky)
    cfg = write_config(tmp_path / "cfg.yaml", data={"annotations": str(dataset)}, train={"epochs": 1},
                       ablation={"seeds": [0]})
    out = tmp_path / "a"
    assert main(["ablate", "--config", str(cfg), "--masks", "0001,0011,0101", "--out", str(out)]) == 0
    status = [l.split(",", 8)[8] for l in (out / "ablation.csv").read_text().splitlines()[1:]]
    assert status == ["ok", "failed: RuntimeError: boom", "ok"]


def test_ablate_all_failed_exit_code(tmp_path, dataset):
    cfg = write_config(tmp_path / "cfg.yaml", data={"annotations": str(dataset)}, train={"epochs": 1},
                       ablation={"seeds": [0]},
                       model={"mask": "0001", "fusion": "luong_attention", "fusion_hidden": 8,
                              "seq": SEQ, "video": VIDEO})
    out = tmp_path / "a"
    # luong fusion needs both branches, so each sequence-only run fails and is recorded
    assert main(["ablate", "--config", str(cfg), "--masks", "0001,0011", "--out", str(out)]) == 1
    lines = (out / "ablation.csv").read_text().splitlines()[1:]
    assert len(lines) == 2 and all("failed: ValueError" in l for l in lines)
