import json

import numpy as np
import pandas as pd
import pytest

from src.cli import main


def _error_line(err: str) -> dict:
    lines = [line for line in err.splitlines() if line.startswith("{")]
    return json.loads(lines[-1])


@pytest.fixture
def ring_pgm(tmp_path, write_pgm):
    pixels = np.full((3, 3), 255)
    pixels[1, 1] = 51
    return write_pgm(tmp_path / "anello.pgm", pixels)


@pytest.fixture
def pgm_dataset(tmp_path, write_pgm, pattern_set_factory):
    """Dataset a directory: <root>/{train,test}/<classe>/*.pgm"""
    root = tmp_path / "patterns"
    for split, count, seed in (("train", 15, 1), ("test", 6, 2)):
        image_set = pattern_set_factory(count, seed=seed)
        for i, (image, label) in enumerate(zip(image_set.images, image_set.labels)):
            class_dir = root / split / f"c{label}"
            class_dir.mkdir(parents=True, exist_ok=True)
            write_pgm(class_dir / f"{i:03d}.pgm", np.round(image.pixels * 255))
    return root


def test_diagram_to_stdout(ring_pgm, capsys):
    assert main(["diagram", str(ring_pgm)]) == 0
    document = json.loads(capsys.readouterr().out)
    assert document["d0"] == [[0.0, 1.0, True]]
    assert len(document["d1"]) == 1
    assert document["d1"][0][1] == pytest.approx(0.8)


def test_diagram_methods_agree(ring_pgm, tmp_path):
    assert main(["diagram", str(ring_pgm), "--out", str(tmp_path / "uf.json")]) == 0
    assert main(["diagram", str(ring_pgm), "--method", "reduction", "--out", str(tmp_path / "red.json")]) == 0
    assert (tmp_path / "uf.json").read_text() == (tmp_path / "red.json").read_text()


def test_complex_dump(ring_pgm, capsys):
    assert main(["complex", str(ring_pgm)]) == 0
    document = json.loads(capsys.readouterr().out)
    assert (document["height"], document["width"]) == (3, 3)
    assert len(document["cells"]) == 16 + 24 + 9


def test_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["train", "--variant", "magia"])
    assert info.value.code == 2
    assert _error_line(capsys.readouterr().err)["error"] == "USAGE_ERROR"


def test_unknown_dataset(tmp_path, capsys):
    code = main(["census", "--dataset", str(tmp_path / "nessuno"), "--workers", "1"])
    assert code == 1
    assert _error_line(capsys.readouterr().err)["error"] == "ARGUMENT_ERROR"


def test_not_a_pgm(tmp_path, capsys):
    path = tmp_path / "finto.pgm"
    path.write_bytes(b"P2\n1 1\n255\n0\n")
    assert main(["diagram", str(path)]) == 1
    assert _error_line(capsys.readouterr().err)["error"] == "FORMAT_ERROR"


def test_featurize_csv(pgm_dataset, tmp_path):
    out = tmp_path / "feature" / "test.csv"
    assert main(["featurize", "--dataset", str(pgm_dataset), "--split", "test", "--k", "2", "--q", "10",
                 "--workers", "1", "--out", str(out)]) == 0
    frame = pd.read_csv(out)
    assert len(frame) == 6
    assert frame.shape[1] == 1 + 2 * 20
    assert sorted(frame["label"].unique()) == [0, 1, 2]


def test_census(pgm_dataset, tmp_path, capsys):
    out = tmp_path / "census.csv"
    assert main(["census", "--dataset", str(pgm_dataset), "--workers", "1", "--out", str(out)]) == 0
    assert "count" in pd.read_csv(out).columns


def test_train_evaluate_ensemble(pgm_dataset, tmp_path, capsys):
    checkpoint = tmp_path / "ckpt" / "topo"
    common = ["--dataset", str(pgm_dataset), "--workers", "1"]
    assert main(["train", *common, "--variant", "topo", "--k", "2", "--q", "10", "--epochs", "2",
                 "--batch-size", "5", "--out", str(checkpoint)]) == 0
    manifest = json.loads(checkpoint.with_suffix(".json").read_text())
    assert manifest["variant"] == "topo"
    assert manifest["metadata"]["k"] == 2 and manifest["metadata"]["n"] == 15

    logits = tmp_path / "topo_logits.csv"
    assert main(["evaluate", "--checkpoint", str(checkpoint), *common, "--out", str(logits)]) == 0
    frame = pd.read_csv(logits)
    assert frame.columns.tolist() == ["sample_index", "logit_0", "logit_1", "logit_2"]
    assert frame["sample_index"].tolist() == list(range(6))

    capsys.readouterr()
    assert main(["ensemble", str(logits), str(logits), "--dataset", str(pgm_dataset)]) == 0
    assert "Accuratezza ensemble" in capsys.readouterr().out


def test_experiment_with_config_file(pgm_dataset, tmp_path):
    config = tmp_path / "esperimento.conf"
    config.write_text("sizes = 6\nfolds = 2\nepochs = 1\nlandscape-epochs = 1\n"
                      "variant = baseline, topo\nk = 2\nq = 10\nworkers = 1\n")
    out = tmp_path / "report"
    assert main(["experiment", "--config", str(config), "--dataset", str(pgm_dataset),
                 "--folds", "1", "--out", str(out)]) == 0
    report = json.loads((out / "report_topo_n6.json").read_text())
    assert report["folds_requested"] == 1
    assert (out / "improvement.csv").exists()


def test_ensemble_malformed_logits(pgm_dataset, tmp_path, capsys):
    good = tmp_path / "backbone.csv"
    good.write_text("sample_index,logit_0,logit_1,logit_2\n0,1.0,0.0,0.0\n")
    bad = tmp_path / "landscape.csv"
    bad.write_text("sample_index,logit_0,logit_1,logit_2\n0,\"1.0,0.0\n")
    assert main(["ensemble", str(good), str(bad), "--dataset", str(pgm_dataset)]) == 1
    assert _error_line(capsys.readouterr().err)["error"] == "FORMAT_ERROR"
