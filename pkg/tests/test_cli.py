import json
import os
import subprocess
import sys

import numpy as np
import pytest

from cipl.cli import main
from cipl.config import ConfigError, RunConfig
from cipl.data.io import manifest_checksum

SMALL = ["--set", "image_size=32", "--set", "channels=[8,8]", "--set", "feature_dim=8",
         "--set", "per_class=2", "--set", "n_classes=2", "--set", "batch_size=4",
         "--set", "warmup_epochs=1", "--set", "main_epochs=1", "--set", "steps_per_epoch=2",
         "--set", "lr=0.003", "--set", "glyph_size=[8,10]"]


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["gen-data", "--out", str(root / "data"), "--n", "40", *SMALL]) == 0
    assert main(["train", "--data", str(root / "data"), "--out", str(root / "run"), *SMALL]) == 0
    return root


def test_gen_data_counts_and_checksum(tmp_path):
    for name in ("a", "b"):
        assert main(["gen-data", "--out", str(tmp_path / name), "--n", "100", "--seed", "5"]) == 0
    files = list((tmp_path / "a").iterdir())
    assert len([f for f in files if f.suffix == ".pgm"]) == 100 and len(files) == 103
    assert manifest_checksum(tmp_path / "a") == manifest_checksum(tmp_path / "b")


def test_gen_data_refuses_overwrite(tmp_path, capsys):
    assert main(["gen-data", "--out", str(tmp_path / "d"), "--n", "3"]) == 0
    assert main(["gen-data", "--out", str(tmp_path / "d"), "--n", "3"]) == 1
    assert "--force" in capsys.readouterr().err
    assert main(["gen-data", "--out", str(tmp_path / "d"), "--n", "3", "--force"]) == 0


def test_gen_data_missing_parent_named(tmp_path, capsys):
    assert main(["gen-data", "--out", str(tmp_path / "missing" / "d"), "--n", "3"]) == 1
    assert "missing" in capsys.readouterr().err


def test_single_label_flag(tmp_path):
    assert main(["gen-data", "--out", str(tmp_path / "d"), "--n", "50", "--single-label"]) == 0
    man = json.loads((tmp_path / "d" / "manifest.json").read_text())
    assert man["single_label"] is True


def test_unknown_key_rejected(tmp_path, capsys):
    assert main(["gen-data", "--out", str(tmp_path / "d"), "--set", "learning_rate=1"]) == 1
    assert "learning_rate" in capsys.readouterr().err
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"lr": 0.1, "bogus": 2}))
    assert main(["gen-data", "--out", str(tmp_path / "d"), "--config", str(cfg)]) == 1
    assert "bogus" in capsys.readouterr().err


def test_config_validation():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"alpha2": -0.1})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"image_size": 60})
    cfg = RunConfig().override("use_cross", "false")
    assert cfg.use_cross is False and cfg.train().use_cross is False
    assert RunConfig().train().weights.alpha1 == 0.02


def test_ablation_flags_reach_train_config():
    from cipl.cli import build_parser, resolve_config
    args = build_parser().parse_args(["train", "--data", "d", "--out", "o", "--ablate-cross",
                                      "--ablate-inte", "--ablate-pred", "--keep-ema", "--seed", "4"])
    cfg = resolve_config(args)
    tc = cfg.train()
    assert (tc.use_cross, tc.use_inte, tc.use_pred, tc.seed, cfg.keep_ema) == (False, False, False, 4, True)
    tc = resolve_config(build_parser().parse_args(["train", "--data", "d", "--out", "o", "--pred-kl"])).train()
    assert tc.pred_kl


def test_train_outputs(trained):
    run = trained / "run"
    assert {"model.ckpt", "state.ckpt", "metrics.jsonl", "config.json"} <= {p.name for p in run.iterdir()}
    lines = (run / "metrics.jsonl").read_text().splitlines()
    assert all(json.loads(l)["kind"] in ("step", "epoch") for l in lines)


def test_basic_only_run_records_zero_terms(trained, tmp_path):
    out = tmp_path / "basic"
    assert main(["train", "--data", str(trained / "data"), "--out", str(out), *SMALL,
                 "--ablate-cross", "--ablate-inte", "--ablate-pred"]) == 0
    for line in (out / "metrics.jsonl").read_text().splitlines():
        rec = json.loads(line)
        if rec["kind"] == "step":
            assert rec["cross"] == rec["inte"] == rec["pred"] == 0.0
            assert rec["total"] == pytest.approx(rec["basic"])


def test_train_refuses_non_empty_out(trained, capsys):
    assert main(["train", "--data", str(trained / "data"), "--out", str(trained / "run"), *SMALL]) == 1
    assert "not empty" in capsys.readouterr().err


def test_eval_report(trained, tmp_path):
    rep = tmp_path / "r.json"
    assert main(["eval", "--checkpoint", str(trained / "run" / "model.ckpt"), "--data", str(trained / "data"),
                 "--val", str(trained / "data"), "--report", str(rep), *SMALL]) == 0
    doc = json.loads(rep.read_text())
    assert {"per_class_auc", "mauc", "mf1", "macc", "localization"} <= set(doc)
    assert set(doc["localization"]["accuracy"]) == {"0.1", "0.3"}
    assert "degenerate_maps" in doc["localization"]


def test_eval_missing_checkpoint(trained, tmp_path, capsys):
    assert main(["eval", "--checkpoint", str(tmp_path / "none.ckpt"), "--data", str(trained / "data")]) == 1
    assert "checkpoint not found" in capsys.readouterr().err


def test_localize_report_monotone(trained, capsys):
    assert main(["localize", "--checkpoint", str(trained / "run" / "model.ckpt"), "--data",
                 str(trained / "data"), "--t", "0.1", "0.3", "0.5", *SMALL]) == 0
    doc = json.loads(capsys.readouterr().out)
    means = [doc["accuracy"][t]["mean"] for t in ("0.1", "0.3", "0.5")]
    assert means == sorted(means, reverse=True) and doc["monotone_in_t"]


def test_localize_empty_boxes(trained, tmp_path, capsys):
    from cipl.data import read_dataset, write_dataset
    ds = read_dataset(trained / "data")
    keep = np.flatnonzero(ds.labels.sum(axis=1) == 0)
    ds.images, ds.labels, ds.ids = ds.images[keep], ds.labels[keep], ds.ids[keep]
    ds.boxes = [ds.boxes[i] for i in keep]
    write_dataset(ds, tmp_path / "neg")
    assert main(["localize", "--checkpoint", str(trained / "run" / "model.ckpt"), "--data",
                 str(tmp_path / "neg"), *SMALL]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["n_cases"] == 0


def test_explain(trained, tmp_path, capsys):
    img = trained / "data" / "0.pgm"
    ck = str(trained / "run" / "model.ckpt")
    assert main(["explain", "--checkpoint", ck, "--image", str(img), "--k", "1", "--out", str(tmp_path)]) == 0
    assert len(list(tmp_path.glob("*.pgm"))) == 3 and len(list(tmp_path.glob("*.json"))) == 1
    assert main(["explain", "--checkpoint", ck, "--image", str(img), "--k", "0", "--out", str(tmp_path)]) == 1
    bad = tmp_path / "bad.pgm"
    bad.write_text("not an image")
    assert main(["explain", "--checkpoint", ck, "--image", str(bad), "--out", str(tmp_path)]) == 1
    assert "PGM" in capsys.readouterr().err


def test_resume_matches_uninterrupted(trained, tmp_path):
    from cipl.data import read_dataset
    from cipl.training import fit
    cfg = RunConfig.from_dict({"image_size": 32, "channels": [8, 8], "feature_dim": 8, "per_class": 2,
                               "n_classes": 2, "batch_size": 4, "warmup_epochs": 1, "main_epochs": 2,
                               "steps_per_epoch": 2, "lr": 0.003})
    ds = read_dataset(trained / "data")

    class Stop(Exception):
        pass

    def stop(state, summary):
        if state.epoch == 2:
            raise Stop
    with pytest.raises(Stop):
        fit(ds, cfg.train(), cfg.backbone(), 2, out_dir=tmp_path / "cut", on_epoch=stop)
    over = ["--set=warmup_epochs=1", "--set=main_epochs=2"]
    assert main(["train", "--data", str(trained / "data"), "--out", str(tmp_path / "cut"), "--resume",
                 *SMALL, *over]) == 0
    assert main(["train", "--data", str(trained / "data"), "--out", str(tmp_path / "full"), *SMALL, *over]) == 0
    assert (tmp_path / "cut" / "metrics.jsonl").read_bytes() == (tmp_path / "full" / "metrics.jsonl").read_bytes()


def test_module_entry_exit_codes(tmp_path):
    env = dict(os.environ, CIPL_THREADS="1")
    ok = subprocess.run([sys.executable, "-m", "cipl", "gen-data", "--out", str(tmp_path / "d"), "--n", "2"],
                        env=env, capture_output=True, text=True)
    assert ok.returncode == 0 and ok.stderr == ""
    bad = subprocess.run([sys.executable, "-m", "cipl", "eval", "--checkpoint", "nope", "--data", "nope"],
                         env=env, capture_output=True, text=True)
    assert bad.returncode != 0 and "error" in bad.stderr and bad.stdout == ""
