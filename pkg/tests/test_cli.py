import shutil

import pytest
import yaml

from wsnthin import cli, thinning
from wsnthin.config import PipelineConfig, bundled_config_path, load_config
from wsnthin.io import read_csv, read_manifest

TINY = {
    "seed": 11,
    "scenario": {"n_stations": 5, "extent_km": 6.0, "n_days": 16, "noise_ta": 0.2,
                 "gaps": [{"station": "S02", "start_day": 3.0, "n_days": 1.0}]},
    "year1": ["2022-06-01", "2022-06-09"],
    "year2": ["2022-06-09", "2022-06-17"],
    "n_folds": 4,
    "final_test_folds": [0],
    "gbt": {"learning_rate": 0.3, "max_depth": 4, "early_stopping_rounds": 5, "max_rounds": 40},
    "tuning": {"sizes": [5, 2], "grid": {"learning_rate": [0.3], "max_depth": [2, 4]},
               "test_folds": [0]},
    "thinning": {"folds": [0], "retraining_points": [3, 2]},
    "subset_sizes": [3, 2],
    "baselines": {"random_repeats": 1, "random_variants": ["1->2"]},
}

# the tiny scenario has no hot days
pytestmark = pytest.mark.filterwarnings("ignore:no errors for:RuntimeWarning")

REPORTS = ["table1_metrics.csv", "table2_indicators.csv", "removal_order.csv", "station_bias.csv"]


def write_config(path, **changes):
    cfg = {**TINY, **changes}
    path.write_text(yaml.safe_dump(cfg))
    return path


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    cfg = write_config(base / "cfg.yaml")
    out = base / "out"
    assert cli.main(["run-all", "--config", str(cfg), "--out", str(out)]) == 0
    return base, cfg, out


def test_run_all_writes_every_artifact(run_dir):
    _, _, out = run_dir
    expected = ["observations.csv", "metadata.csv", "truth.csv", "qc_report.csv",
                "series_10min.csv", "scaling.csv", "folds.csv", "grid_results.csv",
                "best_params.csv", "removal_sequence.csv", "predictions.csv",
                "glm_coefficients.csv", "baseline_predictions.csv", "metrics.csv",
                "indicators.csv", "error_percentiles.csv", "bias_timeseries.csv"] + REPORTS
    for name in expected:
        assert (out / name).exists(), name
        man = read_manifest(out / name)
        assert set(man) == {"code_version", "config_hash", "seed", "stage"}
        assert man["seed"] == "11"


def test_reports_contents(run_dir):
    _, _, out = run_dir
    t1 = read_csv(out / "table1_metrics.csv")
    assert {"EGB", "GLM", "random"} <= set(t1["model"])
    assert {"Ta_rmse", "RH_rmse", "e_rmse"} <= set(t1.columns)
    order = read_csv(out / "removal_order.csv")
    assert len(order) == 4 and order["n_folds"].eq(1).all()
    seq = read_csv(out / "removal_sequence.csv")
    assert list(seq.columns) == thinning.SEQUENCE_COLUMNS


def test_rerun_is_byte_identical(run_dir, tmp_path):
    _, cfg, out = run_dir
    out2 = tmp_path / "again"
    assert cli.main(["run-all", "--config", str(cfg), "--out", str(out2)]) == 0
    for name in REPORTS + ["predictions.csv", "removal_sequence.csv"]:
        assert (out / name).read_bytes() == (out2 / name).read_bytes(), name


def test_step_size_two_halves_the_steps(run_dir, tmp_path):
    base, _, out = run_dir
    work = tmp_path / "out"
    shutil.copytree(out, work)
    cfg = write_config(tmp_path / "cfg.yaml",
                       thinning={"folds": [0], "retraining_points": [3, 2], "step_size": 2})
    assert cli.main(["thin", "--config", str(cfg), "--out", str(work)]) == 0
    seq = read_csv(work / "removal_sequence.csv")
    assert seq["step"].nunique() == 2 and len(seq) == 4


def test_seed_override_changes_manifest(run_dir, tmp_path):
    _, cfg, _ = run_dir
    out = tmp_path / "o"
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(out), "--seed-override", "3"]) == 0
    assert read_manifest(out / "metadata.csv")["seed"] == "3"


def test_missing_artifact_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.yaml")
    assert cli.main(["fit", "--config", str(cfg), "--out", str(tmp_path / "empty")]) == 3
    err = capsys.readouterr().err
    assert "series_10min.csv" in err and "`qc`" in err


@pytest.mark.parametrize("text", ["seed: [1, 2\n", "bogus_key: 1\n", "year1: null\n"])
def test_config_errors_exit_code(tmp_path, text):
    path = tmp_path / "bad.yaml"
    path.write_text(text if text.startswith(("seed", "bogus")) else yaml.safe_dump(TINY) + text)
    assert cli.main(["simulate", "--config", str(path), "--out", str(tmp_path)]) == 2


def test_numerical_failure_exit_code_keeps_partial(run_dir, tmp_path, monkeypatch):
    _, cfg, out = run_dir
    work = tmp_path / "out"
    shutil.copytree(out, work)
    (work / "removal_sequence.csv").unlink()
    partial = thinning.RemovalSequence(fold=0, stations=["S00"])

    def fail(*a, **kw):
        raise thinning.EliminationError("retraining at 3 stations failed", partial)

    monkeypatch.setattr(thinning, "eliminate", fail)
    assert cli.main(["thin", "--config", str(cfg), "--out", str(work)]) == 4
    assert (work / "removal_sequence.partial.csv").exists()
    assert not (work / "removal_sequence.csv").exists()


def test_bundled_config_is_valid():
    cfg = load_config(bundled_config_path()).validate()
    assert cfg.scenario["n_stations"] == 8


def test_digest_ignores_output_dir_and_workers():
    a = PipelineConfig.from_dict({**TINY, "output_dir": "x", "workers": 1})
    b = PipelineConfig.from_dict({**TINY, "output_dir": "y", "workers": 4})
    c = PipelineConfig.from_dict({**TINY, "seed": 12})
    assert a.digest() == b.digest() != c.digest()
