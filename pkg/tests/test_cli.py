import csv

import pytest

from prlp.cli import main

FAST = "seed = 5\ntrain_count = 2\ntest_count = 1\nepochs = 5\nhidden_dim = 4\ncluster_restarts = 3\ncv_folds = 3\nsweep_folds = 2\n"


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "fast.conf").write_text(FAST)
    assert main(["generate", "--config", str(d / "fast.conf"), "--out", str(d / "gen")]) == 0
    return d


def run(work, *args):
    return main([args[0], "--config", str(work / "fast.conf"), *args[1:]])


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_generate_deterministic(work):
    assert run(work, "generate", "--out", str(work / "gen2")) == 0
    for name in ("trajectories.csv", "trajectories_clean.csv", "encounters.csv"):
        assert (work / "gen" / name).read_bytes() == (work / "gen2" / name).read_bytes()
    assert (work / "gen" / "generate.manifest").exists()
    assert len(rows(work / "gen" / "encounters.csv")) == 1 + 2 * 8


def test_test_split_differs(work):
    assert run(work, "generate", "--split", "test", "--out", str(work / "gtest")) == 0
    assert (work / "gtest" / "trajectories.csv").read_bytes() != (work / "gen" / "trajectories.csv").read_bytes()


def test_full_chain(work):
    gen = work / "gen" / "trajectories.csv"
    feats = work / "features.csv"
    assert run(work, "features", "--input", str(gen), "--out", str(feats)) == 0
    assert rows(feats)[0] == ["traj_id", "frame", "px", "py", "vx", "vy", "ttc"]

    assert run(work, "cluster", "--input", str(feats), "--out", str(work / "cl")) == 0
    labeled = work / "cl" / "labeled_features.csv"
    assert rows(labeled)[0][-2:] == ["cluster", "risk"]
    assert len(rows(work / "cl" / "cluster_profiles.csv")) == 5

    svm = work / "svm.json"
    assert run(work, "train-classifier", "--input", str(labeled), "--out", str(svm), "--report", str(work / "eval.csv")) == 0
    assert len(rows(work / "eval.csv")) == 1 + 3

    lstm = work / "lstm.json"
    assert run(work, "train-predictor", "--input", str(gen), "--out", str(lstm)) == 0
    out = work / "pred.csv"
    assert run(work, "predict", "--lstm", str(lstm), "--svm", str(svm), "--input", str(gen), "--out", str(out)) == 0
    body = rows(out)
    assert body[0][-1] == "predicted_risk" and len(body) > 1
    assert (work / "predict.manifest").exists()

    # a classifier file is not an LSTM file
    assert run(work, "predict", "--lstm", str(svm), "--svm", str(svm), "--input", str(gen), "--out", str(out)) == 3


def test_select_k_rows(work, capsys):
    feats = work / "feat_sk.csv"
    assert run(work, "features", "--input", str(work / "gen" / "trajectories.csv"), "--out", str(feats)) == 0
    assert run(work, "select-k", "--input", str(feats), "--out", str(work / "crit.csv"), "--k-min", "2", "--k-max", "8") == 0
    table = rows(work / "crit.csv")
    assert table[0] == ["K", "AIC", "BIC", "silhouette"]
    assert [int(r[0]) for r in table[1:]] == list(range(2, 9))
    assert "best_k=" in capsys.readouterr().out


def test_sweep_window(work):
    out = work / "sweep.csv"
    assert run(work, "sweep-window", "--input", str(work / "gen" / "trajectories.csv"), "--out", str(out)) == 0
    assert [r[0] for r in rows(out)] == ["t_pred", "1", "5"]


def test_unlabeled_features_rejected(work):
    feats = work / "plain.csv"
    assert run(work, "features", "--input", str(work / "gen" / "trajectories.csv"), "--out", str(feats)) == 0
    assert run(work, "train-classifier", "--input", str(feats), "--out", str(work / "x.json")) == 3


def test_exit_codes(work, tmp_path, capsys):
    assert run(work, "features", "--input", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "f.csv")) == 3
    assert "cannot open" in capsys.readouterr().err
    bad = tmp_path / "bad.conf"
    bad.write_text("nonsense_key = 1\n")
    assert main(["generate", "--config", str(bad), "--out", str(tmp_path)]) == 2
    feats = tmp_path / "f2.csv"
    assert run(work, "features", "--input", str(work / "gen" / "trajectories.csv"), "--out", str(feats)) == 0
    assert run(work, "select-k", "--input", str(feats), "--out", str(tmp_path / "c.csv"), "--k-min", "5", "--k-max", "3") == 2
    with pytest.raises(SystemExit) as e:
        main(["no-such-command"])
    assert e.value.code == 2
