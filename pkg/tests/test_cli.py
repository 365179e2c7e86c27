import json
import os

import pytest

from qsbd.cli import build_parser, main, resolve
from qsbd.datasetbuild import read_store
from qsbd.evaluation.protocol import read_predictions_csv
from qsbd.geocore import read_feature_collection

FAST = ["--epochs", "2", "--lr", "1e-3", "--batch", "32", "--head-hidden", "16"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth-gen", "--out", str(root / "camp"), "--cities", "2", "--buildings", "60",
                 "--damage-rate", "0.1", "--s-sar", "0.8", "--seed", "7"]) == 0
    assert main(["build-dataset", "--scenes", str(root / "camp"), "--out", str(root / "ds"), "--ratio", "5"]) == 0
    return root


def test_pipeline_cross_validate(workspace):
    out = workspace / "cv"
    assert main(["cross-validate", "--dataset", str(workspace / "ds"), "--k", "5", "--out", str(out)] + FAST) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["kind"] == "cross-validate" and len(rep["folds"]) == 5
    assert set(rep["metrics"]) == {"precision", "recall", "f1", "kappa", "auroc"}
    assert rep["dataset"]["manifest_sha256"]
    samples, _ = read_store(workspace / "ds")
    preds = read_predictions_csv(out / "predictions.csv")
    # every sample is scored exactly once across the folds
    assert sorted(p.building_id for p in preds) == sorted(samples.ids().tolist())
    pos = [f["test_positives"] for f in rep["folds"]]
    assert max(pos) - min(pos) <= 1
    run = json.loads((out / "run.json").read_text())
    assert run["subcommand"] == "cross-validate" and run["config"]["k"] == 5
    assert any(k.endswith("samples.bin") for k in run["inputs"])


def test_loco_reports_one_per_city(workspace):
    out = workspace / "loco"
    assert main(["loco", "--dataset", str(workspace / "ds"), "--out", str(out)] + FAST) == 0
    rep = json.loads((out / "report.json").read_text())
    assert [f["name"] for f in rep["folds"]] == ["city0", "city1"]
    assert "metrics_train_threshold" in rep
    for p in read_predictions_csv(out / "predictions.csv"):
        assert p.city in ("city0", "city1")


def test_train_evaluate_predict(workspace):
    ck = workspace / "m.ckpt"
    assert main(["train", "--dataset", str(workspace / "ds"), "--out", str(ck), "--modalities", "sar,ftp,gem"]
                + FAST) == 0
    assert (workspace / "m.ckpt.run.json").exists()
    assert main(["evaluate", "--dataset", str(workspace / "ds"), "--checkpoint", str(ck),
                 "--out", str(workspace / "ev")]) == 0
    rep = json.loads((workspace / "ev" / "report.json").read_text())
    assert rep["folds"][0]["n_test"] == len(read_store(workspace / "ds")[0])
    gj = workspace / "pred.geojson"
    assert main(["predict", "--scene", str(workspace / "camp" / "city0"), "--checkpoint", str(ck),
                 "--out", str(gj)]) == 0
    feats = json.loads(gj.read_text())["features"]
    assert len(feats) == len(read_feature_collection(workspace / "camp" / "city0" / "footprints.geojson"))
    for f in feats:
        p = f["properties"]
        assert 0.0 <= p["damage_prob"] <= 1.0 and isinstance(p["damaged"], bool)


def test_reruns_are_identical(workspace):
    args = ["cross-validate", "--dataset", str(workspace / "ds"), "--k", "2"] + FAST
    assert main(args + ["--out", str(workspace / "r1")]) == 0
    assert main(args + ["--out", str(workspace / "r2")]) == 0
    for f in ("report.json", "predictions.csv"):
        assert (workspace / "r1" / f).read_bytes() == (workspace / "r2" / f).read_bytes()


def test_config_file_overrides_flags(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"epochs": 3, "modalities": ["sar", "ftp"]}))
    args = resolve(build_parser().parse_args(["train", "--dataset", "d", "--out", "o", "--epochs", "9",
                                              "--config", str(cfg)]))
    assert args.epochs == 3 and args.modalities == "sar,ftp"
    assert args.lr == 1e-4 and args.batch == 64  # untouched defaults


@pytest.mark.parametrize("argv,code,err", [
    (["train", "--dataset", "missing", "--out", "x"], 1, "FileNotFoundError"),
    (["train", "--modalities", "sar,dsm", "--out", "x"], 2, "ConfigError"),
    (["train", "--profile", "compact", "--lr", "-1", "--out", "x"], 2, "ConfigError"),
])
def test_error_json(workspace, capsys, argv, code, err):
    if "--dataset" not in argv:
        argv = argv + ["--dataset", str(workspace / "ds")]
    assert main(argv) == code
    msg = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert msg["error"] == err and msg["exit_code"] == code


def test_unknown_config_key(workspace, tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"nonsense": 1}')
    assert main(["train", "--dataset", str(workspace / "ds"), "--out", str(tmp_path / "m"),
                 "--config", str(cfg)]) == 2


def test_corrupt_store_exit_code(workspace, tmp_path, capsys):
    import shutil
    d = tmp_path / "ds"
    shutil.copytree(workspace / "ds", d)
    data = bytearray((d / "samples.bin").read_bytes())
    data[100] ^= 1
    (d / "samples.bin").write_bytes(bytes(data))
    assert main(["train", "--dataset", str(d), "--out", str(tmp_path / "m")] + FAST) == 1
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "ManifestMismatch"


def test_single_city_loco_is_runtime_error(workspace, tmp_path, capsys):
    out = tmp_path / "one"
    assert main(["build-dataset", "--scenes", str(workspace / "camp" / "city0"), "--out", str(out)]) == 0
    assert main(["loco", "--dataset", str(out), "--out", str(tmp_path / "l")] + FAST) == 3
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "SingleCity"
    assert not os.path.exists(tmp_path / "l" / "report.json")
