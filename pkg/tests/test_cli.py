import csv
import json

import numpy as np
import pytest

from lexbias.cli import main

from conftest import build_dataset
from lexbias.corpus import save_dataset


@pytest.fixture
def toy_file(tmp_path, toy4):
    path = tmp_path / "toy.jsonl"
    save_dataset(toy4, path)
    return path


@pytest.fixture
def synth_dirs(tmp_path):
    """Planted corpus with train/heldout files plus downstream outputs."""
    out = tmp_path / "syn"
    code = main([
        "synth", "--out", str(out), "--n-instances", "1200", "--n-labels", "2",
        "--background-vocab-size", "40", "--tokens-per-instance", "6",
        "--planted-count", "6", "--skew", "0.9", "--occurrences", "150",
        "--heldout-fraction", "0.1", "--seed", "11",
    ])
    assert code == 0
    return tmp_path, out


def run(args):
    return main([str(a) for a in args])


def read_rows(path):
    with open(path, encoding="utf-8") as fh:
        return [r for r in csv.reader(l for l in fh if not l.startswith("#")) if r]


# --- stats

def test_stats_matches_hand_counted_fixture(tmp_path, toy_file):
    out = tmp_path / "st"
    assert run(["stats", "--out", out, "--data", toy_file,
                "--min-count", "2"]) == 0
    rows = read_rows(out / "feature_table.csv")
    assert rows[0] == ["kind", "key", "doc_count", "count_A", "count_B"]
    assert rows[1] == ["unigram", "f", "3", "2", "1"]
    assert len(rows) == 2
    report = json.loads((out / "balance_report.json").read_text())
    assert report["aggregate_err"] == pytest.approx(1 / 6, abs=1e-12)


def test_stats_missing_input_exits_2(tmp_path, capsys):
    code = run(["stats", "--out", tmp_path / "x", "--data", tmp_path / "nope.jsonl"])
    assert code == 2
    assert "nope.jsonl" in capsys.readouterr().err


def test_stats_bigram_sampling_deterministic(synth_dirs):
    tmp_path, out = synth_dirs
    args = ["stats", "--data", out / "train.jsonl", "--kind", "bigram",
            "--min-count", "2", "--sample", "50", "--seed", "7"]
    assert run(args + ["--out", tmp_path / "s1"]) == 0
    assert run(args + ["--out", tmp_path / "s2"]) == 0
    a = (tmp_path / "s1" / "sampled_bigrams.csv").read_bytes()
    b = (tmp_path / "s2" / "sampled_bigrams.csv").read_bytes()
    assert a == b
    rows = read_rows(tmp_path / "s1" / "sampled_bigrams.csv")
    assert len(rows) == 51  # header + 50 sampled
    balance = read_rows(tmp_path / "s1" / "balance.csv")
    assert len(balance) == 51


def test_stats_empirical_reference(tmp_path, toy_file):
    out = tmp_path / "st"
    assert run(["stats", "--out", out, "--data", toy_file, "--min-count", "2",
                "--reference", "empirical"]) == 0
    report = json.loads((out / "balance_report.json").read_text())
    assert report["reference"] == "empirical"
    assert report["reference_dist"] == [0.5, 0.5]


# --- select-features

def test_select_features_output(synth_dirs):
    tmp_path, out = synth_dirs
    sf = tmp_path / "sf"
    assert run(["select-features", "--out", sf, "--data", out / "train.jsonl",
                "--k", "5", "--stop-words", "none"]) == 0
    rows = read_rows(sf / "feature_stats.csv")
    keys = {r[1] for r in rows[1:]}
    for i in range(6):
        assert "planted%03d" % i in keys


# --- reweight

def test_reweight_toy_reaches_analytic_solution(tmp_path, toy_file):
    out = tmp_path / "rw"
    assert run(["reweight", "--out", out, "--data", toy_file,
                "--min-count", "2", "--require-all-labels", "true"]) == 0
    report = json.loads((out / "reweight_report.json").read_text())
    assert report["err_after"] <= 1e-6
    assert report["err_before"] == pytest.approx(1 / 6, abs=1e-12)
    rows = read_rows(out / "weights.csv")
    assert rows[0] == ["instance_id", "q", "loss_multiplier"]
    assert len(rows) == 5
    mult = np.array([float(r[2]) for r in rows[1:]])
    assert mult.mean() == pytest.approx(1.0, abs=1e-10)
    assert (out / "objective_trace.csv").exists()
    assert (out / "balance_scatter.csv").exists()


def test_reweight_balanced_corpus_reports_zero(tmp_path):
    d = build_dataset(["f x", "f y", "x", "y"], ["A", "B", "B", "A"])
    path = tmp_path / "balanced.jsonl"
    save_dataset(d, path)
    out = tmp_path / "rw"
    assert run(["reweight", "--out", out, "--data", path,
                "--min-count", "1", "--require-all-labels", "true"]) == 0
    report = json.loads((out / "reweight_report.json").read_text())
    assert report["err_before"] == 0.0
    assert report["err_after"] == 0.0


# --- permtest

def write_permtest_fixture(tmp_path):
    """5 instances all containing feature 'u' (usual label A): 3 with
    gold A (the U side), 2 with gold B; predictions correct exactly on
    the U side -> M=5, K=3, n_U=3, c_U=3, p=0.1."""
    d = build_dataset(
        ["u one", "u two", "u three", "u four", "u five"],
        ["A", "A", "A", "B", "B"],
    )
    data = tmp_path / "eval.jsonl"
    save_dataset(d, data)
    feats = tmp_path / "feature_stats.csv"
    feats.write_text(
        "# labels=A,B\n"
        "kind,key,doc_count,p_A,p_B,z_A,z_B,usual_label\n"
        "unigram,u,5,0.6,0.4,2.0,-2.0,A\n"
    )
    preds = tmp_path / "preds.csv"
    preds.write_text(
        "instance_id,predicted_label\n0,A\n1,A\n2,A\n3,A\n4,A\n"
    )
    return data, feats, preds


def test_permtest_exact_tenth(tmp_path):
    data, feats, preds = write_permtest_fixture(tmp_path)
    out = tmp_path / "pt"
    assert run(["permtest", "--out", out, "--eval-data", data,
                "--features", feats, "--predictions", preds]) == 0
    result = json.loads((out / "permtest_result.json").read_text())
    assert result["M"] == 5 and result["K"] == 3
    assert result["n_U"] == 3 and result["c_U"] == 3
    assert result["log10_p"] == pytest.approx(-1.0, abs=1e-12)


def test_permtest_all_correct_gives_one(tmp_path):
    data, feats, _ = write_permtest_fixture(tmp_path)
    preds = tmp_path / "allcorrect.csv"
    preds.write_text(
        "instance_id,predicted_label\n0,A\n1,A\n2,A\n3,B\n4,B\n"
    )
    out = tmp_path / "pt"
    assert run(["permtest", "--out", out, "--eval-data", data,
                "--features", feats, "--predictions", preds]) == 0
    result = json.loads((out / "permtest_result.json").read_text())
    assert result["p"] == 1.0


def test_permtest_missing_prediction_exits_2_naming_id(tmp_path, capsys):
    data, feats, _ = write_permtest_fixture(tmp_path)
    preds = tmp_path / "short.csv"
    preds.write_text("instance_id,predicted_label\n0,A\n1,A\n3,A\n4,A\n")
    code = run(["permtest", "--out", tmp_path / "pt", "--eval-data", data,
                "--features", feats, "--predictions", preds])
    assert code == 2
    assert "instance 2" in capsys.readouterr().err


# --- probe

def test_probe_uniform_weights_file_matches_no_weights(synth_dirs):
    tmp_path, out = synth_dirs
    train_file = out / "train.jsonl"
    n = sum(1 for _ in open(train_file))
    wfile = tmp_path / "uniform_weights.csv"
    with open(wfile, "w") as fh:
        fh.write("# n=%d\n" % n)
        fh.write("instance_id,q,loss_multiplier\n")
        for i in range(n):
            fh.write("%d,%r,1.0\n" % (i, 1.0 / n))
    common = ["--train-data", train_file, "--eval-data", out / "heldout.jsonl",
              "--epochs", "8", "--seed", "3"]
    assert run(["probe", "--out", tmp_path / "p1"] + common) == 0
    assert run(["probe", "--out", tmp_path / "p2", "--weights", wfile] + common) == 0
    a = read_rows(tmp_path / "p1" / "predictions.csv")
    b = read_rows(tmp_path / "p2" / "predictions.csv")
    assert a == b


def test_probe_weights_file_must_cover_all_ids(synth_dirs, capsys):
    tmp_path, out = synth_dirs
    wfile = tmp_path / "short_weights.csv"
    wfile.write_text("instance_id,q,loss_multiplier\n0,0.5,1.0\n")
    code = run(["probe", "--out", tmp_path / "p3",
                "--train-data", out / "train.jsonl",
                "--eval-data", out / "heldout.jsonl",
                "--weights", wfile, "--epochs", "1"])
    assert code == 2
    assert "instance id" in capsys.readouterr().err


def test_probe_separable_toy_accuracy(tmp_path, separable_toy):
    path = tmp_path / "sep.jsonl"
    save_dataset(separable_toy, path)
    out = tmp_path / "probe"
    assert run(["probe", "--out", out, "--train-data", path,
                "--eval-data", path, "--epochs", "50"]) == 0
    report = json.loads((out / "accuracy_report.json").read_text())
    assert report["train"]["accuracy"] == 1.0
    assert report["eval"]["accuracy"] == 1.0


# --- config file and manifest

def test_config_file_supplies_and_flags_override(tmp_path, toy_file):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("min-count=2\nkind=unigram\n")
    out1 = tmp_path / "c1"
    assert run(["stats", "--out", out1, "--data", toy_file,
                "--config", cfg]) == 0
    rows = read_rows(out1 / "feature_table.csv")
    assert len(rows) == 2  # min-count=2 from config kept only "f"
    out2 = tmp_path / "c2"
    assert run(["stats", "--out", out2, "--data", toy_file,
                "--config", cfg, "--min-count", "1"]) == 0
    rows = read_rows(out2 / "feature_table.csv")
    assert len(rows) == 3  # flag overrode the config


def test_unknown_config_key_exits_2(tmp_path, toy_file, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("mincount=2\n")
    assert run(["stats", "--out", tmp_path / "x", "--data", toy_file,
                "--config", cfg]) == 2
    assert "mincount" in capsys.readouterr().err


def test_manifest_written_and_outputs_reference_run_id(tmp_path, toy_file):
    out = tmp_path / "st"
    assert run(["stats", "--out", out, "--data", toy_file, "--min-count", "2"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    run_id = manifest["run_id"]
    assert manifest["command"] == "stats"
    assert "started_at" in manifest and "finished_at" in manifest
    assert set(manifest["outputs"]) == {
        "feature_table.csv", "balance.csv", "balance_report.json",
    }
    table_text = (out / "feature_table.csv").read_text()
    assert ("# run_id=%s" % run_id) in table_text
    report = json.loads((out / "balance_report.json").read_text())
    assert report["run_id"] == run_id


def test_rerun_is_byte_identical(tmp_path, toy_file):
    args = ["reweight", "--data", toy_file, "--min-count", "2",
            "--max-steps", "300", "--seed", "5"]
    assert run(args + ["--out", tmp_path / "r1"]) == 0
    assert run(args + ["--out", tmp_path / "r2"]) == 0
    for name in ("weights.csv", "reweight_report.json",
                  "objective_trace.csv", "balance_scatter.csv"):
        a = (tmp_path / "r1" / name).read_bytes()
        b = (tmp_path / "r2" / name).read_bytes()
        assert a == b, name


def test_bad_flag_value_exits_2(tmp_path, toy_file, capsys):
    assert run(["stats", "--out", tmp_path / "x", "--data", toy_file,
                "--min-count", "abc"]) == 2
    assert "min-count" in capsys.readouterr().err


def test_version_flag():
    assert main(["--version"]) == 0
