"""
Tests for shot files, persisted models/histograms/grids/reports and the
schema check.
"""

import json

import numpy as np
import pytest

from models import IntensityGrid, ModeParams, TwbModel
from services.criteria import evaluate_criteria
from services.errors import EmptyDataError, SchemaVersionError, ShotParseError, ShotValidationError
from services.pipeline import twinbeam_service
from services.simulator import run_experiment, simulate_shots
from services.storage import (
    document_kind,
    file_hash,
    histogram_from_shots,
    load_grid,
    load_histogram,
    load_histogram_from_shots,
    load_model,
    load_report,
    load_shots,
    save_grid,
    save_histogram,
    save_model,
    save_report,
    save_shots,
)

MODEL = TwbModel(
    paired=ModeParams(mu=31, b=0.13),
    noise_s=ModeParams(mu=1.2e-3, b=24),
    noise_i=ModeParams(mu=5.5e-3, b=13),
    eta_s=0.147,
    eta_i=0.150,
)


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_two_rows(tmp_path):
    records = load_shots(write(tmp_path / "shots.csv", "m_s,m_i\n0,0\n2,1\n"))
    assert [(r.m_s, r.m_i) for r in records] == [(0, 0), (2, 1)]
    h = histogram_from_shots(records)
    assert h.shots == 2
    assert h.counts[0, 0] == 1 and h.counts[2, 1] == 1


def test_negative_count_reports_its_line(tmp_path):
    path = write(tmp_path / "shots.csv", "m_s,m_i\n1,1\n3,-1\n")
    with pytest.raises(ShotValidationError) as info:
        load_shots(path)
    assert info.value.line == 3
    assert "line 3" in str(info.value)


def test_non_integer_count_rejected(tmp_path):
    with pytest.raises(ShotValidationError):
        load_shots(write(tmp_path / "shots.csv", "m_s,m_i\n1.5,1\n"))


def test_wrong_header(tmp_path):
    with pytest.raises(ShotParseError) as info:
        load_shots(write(tmp_path / "shots.csv", "signal,idler\n1,1\n"))
    assert info.value.line == 1


def test_missing_value(tmp_path):
    with pytest.raises(ShotParseError) as info:
        load_shots(write(tmp_path / "shots.csv", "m_s,m_i\n1,1\n2,\n"))
    assert info.value.line == 3


def test_trailing_blank_lines_tolerated(tmp_path):
    records = load_shots(write(tmp_path / "shots.csv", "m_s,m_i\n1,2\n3,4\n\n\n"))
    assert len(records) == 2


def test_header_only_is_empty(tmp_path):
    with pytest.raises(EmptyDataError):
        load_shots(write(tmp_path / "shots.csv", "m_s,m_i\n"))
    with pytest.raises(EmptyDataError):
        histogram_from_shots([])


def test_simulated_shots_survive_the_file(tmp_path):
    m_s, m_i = simulate_shots(MODEL, 5000, seed=12)
    path = tmp_path / "shots.csv"
    save_shots(path, m_s, m_i)
    assert path.read_text().startswith("m_s,m_i\n")
    assert load_histogram_from_shots(path).same_as(run_experiment(MODEL, 5000, seed=12))


def test_model_file(tmp_path):
    path = tmp_path / "model.json"
    save_model(path, MODEL)
    assert load_model(path) == MODEL
    assert document_kind(path) == "model"
    assert json.loads(path.read_text())["mu_p"] == 31


def test_incomplete_model_file(tmp_path):
    path = write(tmp_path / "model.json", json.dumps({"schema": "twb-v1", "kind": "model", "mu_p": 1}))
    with pytest.raises(ValueError, match="missing keys"):
        load_model(path)


def test_schema_mismatch(tmp_path):
    path = write(tmp_path / "model.json", json.dumps({"schema": "twb-v0", **MODEL.to_flat()}))
    with pytest.raises(SchemaVersionError) as info:
        load_model(path)
    assert info.value.found == "twb-v0"


def test_histogram_file(tmp_path):
    h = run_experiment(MODEL, 2000, seed=4)
    path = tmp_path / "histogram.json"
    save_histogram(path, h)
    assert load_histogram(path).same_as(h)
    document = json.loads(path.read_text())
    document["cutoffs"] = [0, 0]
    write(path, json.dumps(document))
    with pytest.raises(ValueError):
        load_histogram(path)


def test_grid_file(tmp_path):
    axis_s = np.linspace(0.0, 2.0, 5)
    axis_i = np.linspace(0.0, 3.0, 4)
    values = np.outer(1 - axis_s, 1 - axis_i) / 3.0
    grid = IntensityGrid(axis_s, axis_i, values, order=1, damping=0.8, label="detected")
    path = tmp_path / "grid.csv"
    save_grid(path, grid)
    loaded = load_grid(path)
    np.testing.assert_array_equal(loaded.axis_s, axis_s)
    np.testing.assert_array_equal(loaded.axis_i, axis_i)
    np.testing.assert_array_equal(loaded.values, values)
    assert loaded.metadata() == grid.metadata()
    assert (tmp_path / "grid.json").exists()


def test_report_file(tmp_path):
    h = run_experiment(MODEL, 2000, seed=8)
    shots = tmp_path / "shots.csv"
    save_shots(shots, *simulate_shots(MODEL, 2000, seed=8))
    provenance = twinbeam_service.provenance(seed=8, inputs=[str(shots)], config={"command": "analyze"})
    report = twinbeam_service.report(evaluate_criteria(h), provenance)
    path = tmp_path / "report.json"
    save_report(path, report)
    loaded = load_report(path)
    assert loaded.criteria.R == pytest.approx(report.criteria.R)
    assert loaded.provenance.input_hashes == {"shots.csv": file_hash(shots)}
    assert "timestamp" not in path.read_text()


def test_file_hash_is_content_hash(tmp_path):
    first = write(tmp_path / "a.csv", "m_s,m_i\n1,1\n")
    second = write(tmp_path / "b.csv", "m_s,m_i\n1,1\n")
    assert file_hash(first) == file_hash(second)
    assert len(file_hash(first)) == 64
