"""
End-to-end tests of the command line: files in, files out, exit codes.
"""

import json

import pytest

from cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from models import ModeParams, TwbModel
from services.storage import load_grid, load_histogram, load_report, load_fit_summary, save_model

MODEL = TwbModel(
    paired=ModeParams(mu=31, b=0.13),
    noise_s=ModeParams(mu=1.2e-3, b=24),
    noise_i=ModeParams(mu=5.5e-3, b=13),
    eta_s=0.147,
    eta_i=0.150,
)

PARAMS = ["--param", "mu_p=31", "--param", "b_p=0.13", "--param", "mu_s=0.0012", "--param", "b_s=24",
          "--param", "mu_i=0.0055", "--param", "b_i=13", "--param", "eta_s=0.147", "--param", "eta_i=0.150"]


@pytest.fixture
def model_file(tmp_path):
    path = tmp_path / "model.json"
    save_model(path, MODEL)
    return path


def test_simulate_is_reproducible(tmp_path, model_file):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (first, second):
        assert main(["simulate", "--model", str(model_file), "--shots", "3000", "--seed", "5",
                     "--out", str(out)]) == EXIT_OK
    assert first.read_bytes() == second.read_bytes()


def test_simulate_from_params(tmp_path, model_file):
    from_params, from_file = tmp_path / "p.csv", tmp_path / "f.csv"
    histogram = tmp_path / "h.json"
    assert main(["simulate", *PARAMS, "--shots", "2000", "--seed", "9", "--out", str(from_params),
                 "--histogram", str(histogram)]) == EXIT_OK
    assert main(["simulate", "--model", str(model_file), "--shots", "2000", "--seed", "9",
                 "--out", str(from_file)]) == EXIT_OK
    assert from_params.read_bytes() == from_file.read_bytes()
    assert load_histogram(histogram).shots == 2000


def test_simulate_needs_a_complete_model(tmp_path):
    assert main(["simulate", "--param", "mu_p=3", "--seed", "1", "--out", str(tmp_path / "s.csv")]) == EXIT_USAGE
    assert main(["simulate", "--param", "nope=3", "--seed", "1", "--out", str(tmp_path / "s.csv")]) == EXIT_USAGE


def test_unknown_flag_is_a_usage_error(tmp_path):
    assert main(["analyze", "--frobnicate", "x.csv", "--out", str(tmp_path / "r.json")]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE


def test_missing_input_is_a_usage_error(tmp_path):
    assert main(["analyze", str(tmp_path / "absent.csv"), "--out", str(tmp_path / "r.json")]) == EXIT_USAGE


def test_bad_shot_file_is_a_data_error(tmp_path):
    shots = tmp_path / "shots.csv"
    shots.write_text("m_s,m_i\n1,1\n3,-1\n")
    assert main(["analyze", str(shots), "--bootstrap", "0", "--out", str(tmp_path / "r.json")]) == EXIT_DATA
    assert not (tmp_path / "r.json").exists()


def test_full_pipeline(tmp_path, model_file):
    shots = tmp_path / "shots.csv"
    criteria = tmp_path / "criteria.json"
    fit = tmp_path / "fit.json"
    grid = tmp_path / "grid.csv"
    report = tmp_path / "report.json"

    assert main(["--quiet", "simulate", "--model", str(model_file), "--shots", "50000", "--seed", "1",
                 "--out", str(shots)]) == EXIT_OK
    assert main(["--quiet", "analyze", str(shots), "--eta", "0.15", "--bootstrap", "20", "--seed", "2",
                 "--out", str(criteria)]) == EXIT_OK
    analyzed = load_report(criteria)
    assert analyzed.criteria.flags.R
    assert analyzed.criteria.standard_errors.resamples == 20
    assert analyzed.provenance.seed == 2
    assert "shots.csv" in analyzed.provenance.input_hashes

    assert main(["--quiet", "reconstruct", str(shots), "--restarts", "4", "--out", str(fit)]) == EXIT_OK
    summary = load_fit_summary(fit)
    assert 0 < summary.model.eta_s <= 1
    assert json.loads(fit.read_text())["kind"] == "fit"

    assert main(["--quiet", "intensity", str(shots), "--which", "detected", "--order", "4",
                 "--damping", "0.3", "--points", "21", "--w-max", "3", "--allow-singular",
                 "--out", str(grid)]) == EXIT_OK
    assert load_grid(grid).values.shape == (21, 21)

    assert main(["--quiet", "report", str(shots), "--fit", str(fit), "--grid", str(grid), "--bootstrap", "0",
                 "--out", str(report)]) == EXIT_OK
    document = load_report(report)
    assert document.reconstruction == summary
    assert document.negativity is not None
    assert document.criteria.shots == 50000


def run_pipeline(directory, model_file):
    directory.mkdir()
    shots = directory / "shots.csv"
    fit = directory / "fit.json"
    grid = directory / "grid.csv"
    commands = [
        ["simulate", "--model", str(model_file), "--shots", "20000", "--seed", "1", "--out", str(shots)],
        ["analyze", str(shots), "--eta", "0.15", "--bootstrap", "20", "--seed", "2",
         "--out", str(directory / "criteria.json")],
        ["reconstruct", str(shots), "--restarts", "4", "--out", str(fit)],
        ["intensity", str(fit), "--which", "photons", "--order", "8", "--damping", "0.4", "--points", "21",
         "--allow-singular", "--out", str(grid)],
        ["report", str(shots), "--fit", str(fit), "--grid", str(grid), "--bootstrap", "10", "--seed", "3",
         "--out", str(directory / "report.json")],
    ]
    for command in commands:
        assert main(["--quiet", *command]) == EXIT_OK
    return {path.name: path.read_bytes() for path in sorted(directory.iterdir())}


def test_pipeline_artifacts_are_byte_identical(tmp_path, model_file):
    first = run_pipeline(tmp_path / "first", model_file)
    second = run_pipeline(tmp_path / "second", model_file)
    assert sorted(first) == ["criteria.json", "fit.json", "grid.csv", "grid.json", "report.json", "shots.csv"]
    for name in first:
        assert first[name] == second[name], name


def test_intensity_of_a_histogram_needs_the_detected_level(tmp_path, model_file):
    shots = tmp_path / "shots.csv"
    assert main(["simulate", "--model", str(model_file), "--shots", "500", "--seed", "3",
                 "--out", str(shots)]) == EXIT_OK
    assert main(["intensity", str(shots), "--which", "photons", "--out", str(tmp_path / "g.csv")]) == EXIT_USAGE


def test_intensity_of_a_model(tmp_path, model_file):
    grid = tmp_path / "grid.csv"
    assert main(["intensity", str(model_file), "--which", "photons", "--order", "6", "--damping", "0.4",
                 "--points", "11", "--allow-singular", "--out", str(grid)]) == EXIT_OK
    loaded = load_grid(grid)
    assert loaded.label == "photons"
    assert loaded.order == 6
