import json
import os

import pytest

import main
from conftest import model_path


def run(capsys, *argv):
    code = main.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def asia_csv(tmp_path, capsys):
    path = str(tmp_path / "asia.csv")
    code, _, err = run(capsys, "sample", "--model", model_path("asia"), "--rows", "2000", "--seed", "3",
                       "--out", path)
    assert code == 0 and "[+]" in err
    return path


def test_inspect(capsys, asia_csv):
    code, out, _ = run(capsys, "inspect", "--data", asia_csv)
    payload = json.loads(out)
    assert code == 0
    assert payload["n"] == 8 and payload["N"] == 2000
    labels = [v["label"] for v in payload["variables"]]
    assert all(v["cardinality"] == 2 for v in payload["variables"])
    assert sorted(payload["score_order"]) == sorted(labels)
    assert set(payload["sort_keys"]) == set(labels)


def test_learn_writes_graph_and_log(tmp_path, capsys, asia_csv):
    out_path = str(tmp_path / "learned.txt")
    log_dir = str(tmp_path / "logs")
    code, out, _ = run(capsys, "learn", "--algo", "hc-stable", "--data", asia_csv, "--out", out_path,
                       "--log-dir", log_dir)
    assert code == 0
    payload = json.loads(out)
    assert payload["algorithm"] == "hc-stable"
    assert payload["dag"].startswith("nodes: ")
    assert len(payload["stable_order"]) == 8
    with open(out_path, "r", encoding="utf-8") as f:
        assert f.read() == payload["dag"]
    assert any(name.endswith(".json") for name in os.listdir(log_dir))
    assert any(name.endswith(".txt") for name in os.listdir(log_dir))


def test_learn_with_perturbation_seed_maps_labels_back(capsys, asia_csv):
    _, plain, _ = run(capsys, "learn", "--algo", "hc-stable", "--data", asia_csv)
    code, seeded, err = run(capsys, "learn", "--algo", "hc-stable", "--data", asia_csv, "--seed", "5")
    assert code == 0 and "perturbation seed 5" in err
    plain, seeded = json.loads(plain), json.loads(seeded)
    assert seeded["stable_order"] == plain["stable_order"]
    assert seeded["dag"] == plain["dag"]


def test_score_and_evaluate(tmp_path, capsys, asia_csv):
    code, out, _ = run(capsys, "score", "--data", asia_csv, "--model", model_path("asia"))
    scores = json.loads(out)["scores"]
    assert code == 0 and set(scores) == {"bic", "bdeu"}
    assert scores["bic"]["normalized"] == pytest.approx(scores["bic"]["total"] / 2000)

    truth = tmp_path / "truth.txt"
    truth.write_text("nodes: asia,tub,smoke,lung,bronc,either,xray,dysp\nasia -> tub\nsmoke -> lung\n"
                     "smoke -> bronc\ntub -> either\nlung -> either\neither -> xray\nbronc -> dysp\n"
                     "either -> dysp\n", encoding="utf-8")
    code, out, _ = run(capsys, "score", "--data", asia_csv, "--graph", str(truth))
    assert json.loads(out)["scores"] == scores

    code, out, _ = run(capsys, "evaluate", "--learned", str(truth), "--model", model_path("asia"),
                       "--data", asia_csv)
    report = json.loads(out)
    assert code == 0 and report["f1"] == 1.0 and report["bsf"] == pytest.approx(1.0)
    assert report["normalized_bic"] == pytest.approx(scores["bic"]["normalized"])


def test_input_errors_exit_with_code_2(tmp_path, capsys):
    code, _, err = run(capsys, "inspect", "--data", str(tmp_path / "missing.csv"))
    assert code == 2 and err.startswith("[!]")

    ragged = tmp_path / "ragged.csv"
    ragged.write_text("a,b\nx,y\nx,y,z\n", encoding="utf-8")
    code, _, err = run(capsys, "learn", "--data", str(ragged))
    assert code == 2 and "row 3" in err

    code, _, _ = run(capsys, "demo-instability", "--model", model_path("gauss6"), "--rows", "50")
    assert code == 2


def test_demo_instability(capsys):
    code, out, _ = run(capsys, "demo-instability", "--model", model_path("cancer"), "--rows", "300",
                       "--tries", "3")
    payload = json.loads(out)
    assert code == 0
    assert len(payload["runs"]) == 2
    assert isinstance(payload["differ"], bool)


def test_suite_command(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    config = tmp_path / "experiment.toml"
    config.write_text(
        f'models = ["{model_path("gauss6")}"]\nsample_sizes = [100]\nalgorithms = ["hc", "hc-stable"]\n'
        'n_randomizations = 2\ntime_limit_s = 60\noutput_dir = "out"\n',
        encoding="utf-8",
    )
    code, out, _ = run(capsys, "suite", "--config", str(config), "--workers", "1")
    assert code == 0
    assert "Stable-BN benchmark suite" in out
    assert os.path.isfile(tmp_path / "out" / "runs.csv")
