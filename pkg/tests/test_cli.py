import csv
import hashlib
import io
import json

import numpy as np
import pytest

from balancemix import cli, storage

SMALL = {
    "seed": 3,
    "generator": {"n": 300, "d": 8, "k": 4, "imbalance": 5, "separability": 2.0},
    "n_val": 200,
    "noise": {"type": "flip", "tau": 0.2},
    "train": {"epochs": 5, "warmup_epochs": 2, "batch_size": 32, "hidden_dim": 16},
}


def _config(tmp_path, name="c.json", **overrides):
    cfg = json.loads(json.dumps(SMALL))
    for key, value in overrides.items():
        cfg[key] = value
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _digest(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


@pytest.fixture
def dataset(tmp_path):
    out = str(tmp_path / "d.bmx")
    assert cli.main(["generate", "--config", _config(tmp_path), "--out", out]) == 0
    return out


@pytest.fixture
def run(tmp_path, dataset):
    out = str(tmp_path / "run")
    assert cli.main(["train", "--config", _config(tmp_path), "--dataset", dataset, "--out", out]) == 0
    return out


def test_resolve_echoes_defaults():
    cfg = cli.resolve_config({})
    assert cfg["train"]["alpha"] == 4.0 and cfg["train"]["epsilon"] == 0.975
    assert cfg["train"]["warmup_epochs"] == 10
    assert cfg["generator"]["n"] == 2000 and cfg["n_val"] == 4000
    assert cli.resolve_config({"seed": 1}, seed=9)["train"]["seed"] == 9


@pytest.mark.parametrize("raw", [
    {"typo": 1},
    {"train": {"epsilon": 0.4}},
    {"train": {"seed": 1}},
    {"noise": {"type": "flip", "tau": 1.0}},
    {"noise": {"type": "gaussian"}},
    {"generator": {"imbalance": 5, "decay": 0.5}},
    {"groups": {"many": 0.25, "t_medium": 10}},
])
def test_resolve_rejects(raw):
    with pytest.raises(cli.ConfigError):
        cli.resolve_config(raw)


def test_single_positive_ignores_tau():
    assert cli.resolve_config({"noise": {"type": "single_positive", "tau": 0.9}})["noise"]["tau"] is None


def test_generate_clean_and_reproducible(tmp_path):
    cfg = _config(tmp_path, noise={"type": "none"})
    a, b = str(tmp_path / "a.bmx"), str(tmp_path / "b.bmx")
    assert cli.main(["generate", "--config", cfg, "--out", a]) == 0
    assert cli.main(["generate", "--config", cfg, "--out", b]) == 0
    assert _digest(a) == _digest(b)
    train, val, _ = storage.read_dataset(a)
    assert np.array_equal(train.observed_labels, train.true_labels)
    assert cli.main(["generate", "--config", cfg, "--out", b, "--seed", "4"]) == 0
    assert _digest(a) != _digest(b)


def test_generate_manifest_reports_flip_rate(tmp_path):
    cfg = _config(tmp_path, noise={"type": "flip", "tau": 0.4})
    out = str(tmp_path / "f.bmx")
    assert cli.main(["generate", "--config", cfg, "--out", out]) == 0
    manifest = json.loads(open(out + ".manifest.json").read())
    train, _, _ = storage.read_dataset(out)
    recount = (train.observed_labels != train.true_labels).mean()
    assert manifest["noise_rate"] == pytest.approx(recount)
    assert abs(recount - 0.4) < 3 * np.sqrt(0.24 / train.true_labels.size)
    assert manifest["cls_imbalance"] == pytest.approx(5, rel=0.2)


def test_train_outputs(run):
    cfg = json.loads(open(f"{run}/config.json").read())
    assert cfg["train"]["alpha"] == 4.0 and cfg["train"]["warmup_epochs"] == 2
    lines = open(f"{run}/epochs.jsonl").read().splitlines()
    assert len(lines) == 5
    for line in lines:
        rec = json.loads(line)
        assert sum(rec["counts"].values()) == 300 * 4
    metrics = json.loads(open(f"{run}/metrics.json").read())
    assert {"map_all", "map_many", "map_medium", "map_few", "per_class", "diagnostics"} <= set(metrics)
    assert 0 <= metrics["map_all"] <= 1


def test_train_is_reproducible_and_leaves_input_alone(tmp_path, dataset, run):
    before = _digest(dataset)
    again = str(tmp_path / "again")
    assert cli.main(["train", "--config", _config(tmp_path), "--dataset", dataset, "--out", again]) == 0
    assert open(f"{run}/metrics.json").read() == open(f"{again}/metrics.json").read()
    assert _digest(dataset) == before


def test_baseline_descends(tmp_path, dataset):
    out = str(tmp_path / "base")
    cfg = _config(tmp_path, train={"epochs": 30, "warmup_epochs": 0, "batch_size": 32, "hidden_dim": 16})
    assert cli.main(["train", "--config", cfg, "--dataset", dataset, "--out", out,
                     "--mode", "bce_baseline"]) == 0
    losses = [json.loads(l)["mean_loss"] for l in open(f"{out}/epochs.jsonl")]
    assert losses[-1] < losses[0]
    assert json.loads(open(f"{out}/config.json").read())["train"]["mode"] == "bce_baseline"


def test_warmup_equals_epochs_logs_no_management(tmp_path, dataset):
    out = str(tmp_path / "warm")
    cfg = _config(tmp_path, train={"epochs": 3, "warmup_epochs": 3, "batch_size": 32, "hidden_dim": 16})
    assert cli.main(["train", "--config", cfg, "--dataset", dataset, "--out", out]) == 0
    for line in open(f"{out}/epochs.jsonl"):
        counts = json.loads(line)["counts"]
        assert counts["R"] == 0 and counts["U"] == 0


def test_evaluate_reproduces_final_metrics(run, dataset, capsys):
    capsys.readouterr()
    assert cli.main(["evaluate", "--checkpoint", f"{run}/checkpoint.npz", "--dataset", dataset]) == 0
    printed = json.loads(capsys.readouterr().out)
    logged = json.loads(open(f"{run}/metrics.json").read())
    for key in ("map_all", "map_many", "map_medium", "map_few", "per_class"):
        assert printed[key] == logged[key]


def test_evaluate_true_vs_observed_labels(run, dataset, capsys):
    args = ["evaluate", "--checkpoint", f"{run}/checkpoint.npz", "--dataset", dataset, "--split", "train"]
    capsys.readouterr()
    cli.main(args)
    true = json.loads(capsys.readouterr().out)
    cli.main(args + ["--labels", "observed"])
    observed = json.loads(capsys.readouterr().out)
    # the training split carries 20% flips, so scoring against them looks worse
    assert observed["map_all"] < true["map_all"]


def test_evaluate_dimension_mismatch(tmp_path, run):
    other = str(tmp_path / "o.bmx")
    cfg = _config(tmp_path, "o.json", generator={"n": 100, "d": 5, "k": 4, "imbalance": 5})
    assert cli.main(["generate", "--config", cfg, "--out", other]) == 0
    assert cli.main(["evaluate", "--checkpoint", f"{run}/checkpoint.npz", "--dataset", other]) == 4


def _csv(capsys, *args):
    capsys.readouterr()
    assert cli.main(["inspect", *args]) == 0
    return list(csv.DictReader(io.StringIO(capsys.readouterr().out)))


def test_inspect_dumps(run, capsys):
    rows = _csv(capsys, run, "sampler")
    for epoch in {r["epoch"] for r in rows}:
        assert sum(float(r["prob"]) for r in rows if r["epoch"] == epoch) == pytest.approx(1, abs=1e-9)
    for r in _csv(capsys, run, "ledger"):
        assert int(r["C"]) + int(r["R"]) + int(r["U"]) == int(r["total"]) == 1200
    gmm = _csv(capsys, run, "gmm")
    assert gmm
    by_key = {}
    for r in gmm:
        by_key.setdefault((r["epoch"], r["class"], r["polarity"]), {})[r["component"]] = float(r["mean"])
    assert all(v["clean"] <= v["noisy"] for v in by_key.values())
    assert len(_csv(capsys, run, "confidence")) == 5 * 4


def test_inspect_missing_run(tmp_path):
    assert cli.main(["inspect", str(tmp_path / "none"), "gmm"]) == 3


def test_exit_codes(tmp_path, dataset, monkeypatch):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["generate", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert cli.main(["generate", "--config", str(tmp_path / "missing.json"), "--out", "x"]) == 3
    monkeypatch.setenv("BALANCEMIX_THREADS", "zero")
    assert cli.main(["train", "--config", _config(tmp_path), "--dataset", dataset,
                     "--out", str(tmp_path / "r")]) == 2


def test_threads_env_does_not_change_metrics(tmp_path, dataset, run, monkeypatch):
    monkeypatch.setenv("BALANCEMIX_THREADS", "4")
    out = str(tmp_path / "threaded")
    assert cli.main(["train", "--config", _config(tmp_path), "--dataset", dataset, "--out", out]) == 0
    assert open(f"{run}/metrics.json").read() == open(f"{out}/metrics.json").read()
