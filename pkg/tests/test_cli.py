import csv
import json

import pytest

from voidsurrogate.cli import main
from voidsurrogate.datastore import load_bundle, load_dataset, save_dataset


@pytest.fixture
def root(tmp_path, monkeypatch):
    monkeypatch.setenv("VOIDSURROGATE_OUTPUT_ROOT", str(tmp_path))
    return tmp_path


@pytest.fixture(scope="module")
def flat_dir(tmp_path_factory, ds_flat):
    return save_dataset(ds_flat, tmp_path_factory.mktemp("data") / "flat")


@pytest.fixture(scope="module")
def f1_run(tmp_path_factory, flat_dir):
    out = tmp_path_factory.mktemp("runs") / "f1"
    code = main(["fit", "--framework", "f1-gp", "--dataset", str(flat_dir), "--trainval", "100",
                 "--test", "150", "--gp-restarts", "2", "--out", str(out)])
    assert code == 0
    return out


def test_help(capsys):
    assert main(["--help"]) == 0
    assert main(["fit", "--help"]) == 0
    assert "--framework" in capsys.readouterr().out


def test_generate_is_reproducible(root):
    args = ["generate", "--case", "rotated", "--n", "12", "--grid", "24", "--seed", "7"]
    assert main([*args, "--out", "a"]) == 0
    assert main([*args, "--out", "b", "--workers", "2"]) == 0
    for f in ("masks.f64", "stress.f64", "manifest.json"):
        assert (root / "a" / f).read_bytes() == (root / "b" / f).read_bytes()
    ds = load_dataset(root / "a")
    assert len(ds) == 12 and ds.grid.nx == 24
    run = json.loads((root / "a" / "run.json").read_text())
    assert run["seed"] == 7 and run["case"] == "rotated"


def test_generate_rejects_zero(root):
    assert main(["generate", "--n", "0", "--out", "z"]) == 2
    assert not (root / "z").exists()
    assert main(["generate", "--case", "diagonal"]) == 2


def test_config_file_with_flag_override(root):
    (root / "cfg.json").write_text(json.dumps({"n": 3, "grid": 16, "seed": 5}))
    assert main(["generate", "--config", str(root / "cfg.json"), "--n", "4", "--out", "c"]) == 0
    ds = load_dataset(root / "c")
    assert len(ds) == 4 and ds.grid.nx == 16 and ds.seed == 5
    (root / "bad.json").write_text(json.dumps({"colour": 1}))
    assert main(["generate", "--config", str(root / "bad.json")]) == 2


def test_fit_missing_dataset(root):
    assert main(["fit", "--dataset", str(root / "nope"), "--out", "f"]) == 2
    assert not (root / "f").exists()


def test_fit_infeasible_split(root, flat_dir):
    assert main(["fit", "--dataset", str(flat_dir), "--trainval", "200", "--out", "f"]) == 2


def test_f1_outputs(f1_run):
    bundle = load_bundle(f1_run / "bundle")
    assert bundle.pipeline.kind == "gp"
    for name in ("trials.csv", "summary.json", "split.json", "run.json"):
        assert (f1_run / name).exists()
    summary = json.loads((f1_run / "summary.json").read_text())
    assert summary["n_trials"] == 5 and summary["framework"] == "f1-gp"


def test_f2_single_trial(root, flat_dir):
    code = main(["fit", "--framework", "f2-nn", "--dataset", str(flat_dir), "--trials", "1",
                 "--workers", "1", "--max-epochs", "20", "--trainval", "40", "--out", "f2"])
    assert code == 0
    summary = json.loads((root / "f2" / "summary.json").read_text())
    assert summary["best_trial"] == 0 and summary["n_trials"] == 1
    assert load_bundle(root / "f2" / "bundle").pipeline.kind == "nn"


def _metrics(path):
    with open(path) as fh:
        table = list(csv.reader(fh))
    return table[0], dict(zip(table[0][1:], map(float, table[1][1:])))


def test_evaluate_train_beats_test(root, flat_dir, f1_run):
    assert main(["evaluate", "--bundle", str(f1_run / "bundle"), "--dataset", str(flat_dir), "--out", "test"]) == 0
    assert main(["evaluate", "--bundle", str(f1_run / "bundle"), "--dataset", str(flat_dir),
                 "--split", "train", "--out", "train"]) == 0
    header, test_err = _metrics(root / "test" / "metrics.csv")
    _, train_err = _metrics(root / "train" / "metrics.csv")
    assert header == ["sample_stat", "average", "maximum", "p50", "p90", "p97", "p99"]
    assert all(train_err[k] < test_err[k] for k in test_err)
    for name in ("per_sample.csv", "cross_section_best.csv", "cross_section_worst.csv", "report.json"):
        assert (root / "test" / name).exists()
    report = json.loads((root / "test" / "report.json").read_text())
    assert report["n_samples"] == 150 and "solid pixels" in report["metric_definition"]


def test_evaluate_empty_selection(root, flat_dir, f1_run):
    code = main(["evaluate", "--bundle", str(f1_run / "bundle"), "--dataset", str(flat_dir),
                 "--indices", "", "--out", "e"])
    assert code == 2


def test_evaluate_grid_mismatch(root, f1_run):
    assert main(["generate", "--n", "3", "--grid", "16", "--out", "small"]) == 0
    code = main(["evaluate", "--bundle", str(f1_run / "bundle"), "--dataset", str(root / "small"),
                 "--indices", "0", "--out", "e"])
    assert code == 3


def test_study_single_size_reproducible(root, flat_dir):
    args = ["study", "--framework", "f1-gp", "--dataset", str(flat_dir), "--sizes", "100",
            "--fractions", "0.9", "--gp-restarts", "1"]
    assert main([*args, "--out", "s1"]) == 0
    assert main([*args, "--out", "s2"]) == 0
    t1 = (root / "s1" / "study_f1-gp.csv").read_text()
    assert t1 == (root / "s2" / "study_f1-gp.csv").read_text()
    assert len(t1.splitlines()) == 2
    run = json.loads((root / "s1" / "run.json").read_text())
    assert run["seed"] == 0 and run["split_seed"] == 0


def test_dataset_not_mutated(root, flat_dir, f1_run):
    before = {p.name: p.read_bytes() for p in flat_dir.iterdir()}
    main(["evaluate", "--bundle", str(f1_run / "bundle"), "--dataset", str(flat_dir), "--out", "again"])
    assert {p.name: p.read_bytes() for p in flat_dir.iterdir()} == before
