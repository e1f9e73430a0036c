import json

import numpy as np
import pytest

from harmonylab import features, scene
from harmonylab.cli import load_config, main


SMALL_GEN = {
    "generation": {
        "resolution": 64,
        "counts": {"circle": {"black": [1, 2]}, "rectangle": {"white": [0, 1]}},
    },
}


def write_config(tmp_path, extra=None):
    cfg = dict(SMALL_GEN)
    if extra:
        cfg = {**cfg, **extra}
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def make_ratings(tmp_path, data_dir, spread=True):
    comp_ids = sorted(p.stem for p in (data_dir).glob("*.json"))
    path = tmp_path / "ratings.jsonl"
    lines = []
    for i, cid in enumerate(comp_ids):
        rating = (i % 5) + 1 if spread else 3
        lines.append({"composition_id": cid, "rating": rating, "round": 0,
                      "rater_id": "r1", "timestamp": float(i)})
    path.write_text("\n".join(json.dumps(r) for r in lines) + "\n")
    return path


class TestGenerate:
    def test_generate_writes_files(self, tmp_path):
        cfg = write_config(tmp_path)
        rc = main(["--config", cfg, "--seed", "5", "generate", "--count", "3",
                   "--out", str(tmp_path / "data")])
        assert rc == 0
        comp_dir = tmp_path / "data"
        assert len(list(comp_dir.glob("*.json"))) == 3
        assert len(list(comp_dir.glob("*.png"))) == 3

    def test_generate_deterministic(self, tmp_path):
        cfg = write_config(tmp_path)
        main(["--config", cfg, "--seed", "5", "generate", "--count", "2",
              "--out", str(tmp_path / "a")])
        main(["--config", cfg, "--seed", "5", "generate", "--count", "2",
              "--out", str(tmp_path / "b")])
        for name in ("comp-0005-00000.json", "comp-0005-00001.png"):
            a = (tmp_path / "a" / name).read_bytes()
            b = (tmp_path / "b" / name).read_bytes()
            assert a == b

    def test_rasterize_round_trip(self, tmp_path):
        cfg = write_config(tmp_path)
        main(["--config", cfg, "--seed", "1", "generate", "--count", "2",
              "--out", str(tmp_path / "data")])
        png = tmp_path / "data" / "comp-0001-00000.png"
        original = png.read_bytes()
        png.unlink()
        rc = main(["rasterize", "--data", str(tmp_path / "data")])
        assert rc == 0
        assert png.read_bytes() == original


class TestExtract:
    def test_extract_d3_csv(self, tmp_path):
        cfg = write_config(tmp_path)
        main(["--config", cfg, "--seed", "2", "generate", "--count", "4",
              "--out", str(tmp_path / "data")])
        out = tmp_path / "features.csv"
        rc = main(["extract", "--data", str(tmp_path / "data"), "--out", str(out)])
        assert rc == 0
        ids, matrix, names, version = features.read_feature_csv(out)
        assert matrix.shape == (4, 70)
        assert version.startswith("hc-v1")

    def test_extract_polish_writes_sidecars(self, tmp_path):
        cfg = write_config(tmp_path)
        main(["--config", cfg, "--seed", "9", "generate", "--count", "40",
              "--out", str(tmp_path / "data")])
        out = tmp_path / "features.csv"
        rc = main(["extract", "--data", str(tmp_path / "data"), "--out", str(out),
                   "--polish"])
        assert rc == 0
        assert (tmp_path / "features.plan.json").exists()
        assert (tmp_path / "features.projection.json").exists()
        ids, matrix, names, version = features.read_feature_csv(out)
        assert matrix.shape == (40, 109)
        assert version.endswith("polished")

    def test_extract_d2_requires_ae(self, tmp_path):
        cfg = write_config(tmp_path)
        main(["--config", cfg, "--seed", "2", "generate", "--count", "2",
              "--out", str(tmp_path / "data")])
        with pytest.raises(SystemExit):
            main(["extract", "--data", str(tmp_path / "data"),
                  "--out", str(tmp_path / "f.csv"), "--dataset", "d2"])


class TestPipelineCommands:
    def test_train_ae_and_extract_d2(self, tmp_path):
        cfg = write_config(tmp_path, {"autoencoder": {"epochs": 1, "hidden": 2,
                                                      "batch_size": 4}})
        main(["--config", cfg, "--seed", "3", "generate", "--count", "6",
              "--out", str(tmp_path / "data")])
        ae_path = tmp_path / "ae.npz"
        rc = main(["--config", cfg, "--seed", "3", "train-ae",
                   "--data", str(tmp_path / "data"), "--out", str(ae_path),
                   "--report", str(tmp_path / "ae.csv")])
        assert rc == 0
        assert ae_path.exists()
        assert (tmp_path / "ae.csv").read_text().startswith("epoch,")
        out = tmp_path / "d2.csv"
        rc = main(["extract", "--data", str(tmp_path / "data"), "--out", str(out),
                   "--dataset", "d2", "--ae-params", str(ae_path)])
        assert rc == 0
        _, matrix, names, _ = features.read_feature_csv(out)
        assert matrix.shape[1] == 70 + 169

    def test_fit_bovw_and_extract_d1(self, tmp_path):
        cfg = write_config(tmp_path, {"autoencoder": {"epochs": 1, "hidden": 2,
                                                      "batch_size": 4},
                                      "grid": {"kmeans_iters": 5}})
        main(["--config", cfg, "--seed", "4", "generate", "--count", "6",
              "--out", str(tmp_path / "data")])
        ae_path, cb_path = tmp_path / "ae.npz", tmp_path / "cb.json"
        main(["--config", cfg, "--seed", "4", "train-ae",
              "--data", str(tmp_path / "data"), "--out", str(ae_path)])
        rc = main(["--config", cfg, "--seed", "4", "fit-bovw",
                   "--data", str(tmp_path / "data"), "--out", str(cb_path),
                   "--ks", "3,5"])
        assert rc == 0
        out = tmp_path / "d1.csv"
        rc = main(["extract", "--data", str(tmp_path / "data"), "--out", str(out),
                   "--dataset", "d1", "--ae-params", str(ae_path),
                   "--codebooks", str(cb_path)])
        assert rc == 0
        _, matrix, names, _ = features.read_feature_csv(out)
        assert matrix.shape[1] == 70 + 169 + 8


class TestSimulateConvergence:
    def test_prints_table(self, tmp_path, capsys):
        path = tmp_path / "ratings.jsonl"
        rows = []
        for i in range(5):
            cid = f"c{i}"
            rows.append({"composition_id": cid, "rating": i + 1, "round": 0,
                         "rater_id": "r1", "timestamp": 0.0})
            rows.append({"composition_id": cid, "rating": i + 1, "round": 1,
                         "rater_id": "r1", "timestamp": 1.0})
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        rc = main(["simulate-convergence", "--reratings", str(path),
                   "--rounds", "10", "--trials", "50"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "Old rating" in out
        for c in "12345":
            assert f"{c} | {c}.00" in out


class TestEvaluate:
    def test_grid_runs_and_writes_report(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"grid": {
            "setups": ["BG"], "variants": ["d3"], "models": ["ridge", "majority"],
            "n_folds": 3}})
        main(["--config", cfg, "--seed", "6", "generate", "--count", "150",
              "--out", str(tmp_path / "data")])
        ratings = make_ratings(tmp_path, tmp_path / "data")
        report_path = tmp_path / "report.json"
        rc = main(["--config", cfg, "--seed", "6", "evaluate", "--grid",
                   "--data", str(tmp_path / "data"), "--ratings", str(ratings),
                   "--out", str(report_path), "--csv", str(tmp_path / "report.csv")])
        assert rc == 0
        data = json.loads(report_path.read_text())
        assert len(data["cells"]) == 2
        assert (tmp_path / "report.csv").exists()
        out = capsys.readouterr().out
        assert "BG" in out and "d3" in out and "report written" in out
