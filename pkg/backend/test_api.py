"""
HTTP API tests against the FastAPI app.
"""

import pytest
from fastapi.testclient import TestClient

from main import app

MODEL = {
    "paired": {"mu": 31, "b": 0.13},
    "noise_s": {"mu": 1.2e-3, "b": 24},
    "noise_i": {"mu": 5.5e-3, "b": 13},
    "eta_s": 0.147,
    "eta_i": 0.150,
}

IDEAL = {
    "paired": {"mu": 4, "b": 0.5},
    "noise_s": {"mu": 1, "b": 0},
    "noise_i": {"mu": 1, "b": 0},
    "eta_s": 1.0,
    "eta_i": 1.0,
}


@pytest.fixture(scope="module")
def client():
    with TestClient(app) as test_client:
        yield test_client


def test_root(client):
    response = client.get("/")
    assert response.status_code == 200
    assert response.json()["health"] == "/api/v1/health"


def test_health(client):
    response = client.get("/api/v1/health")
    assert response.status_code == 200
    body = response.json()
    assert body["status"] == "healthy"
    assert body["services"]["schema"] == "twb-v1"


def test_simulate(client):
    response = client.post("/api/v1/simulate", json={"model": MODEL, "shots": 5000, "seed": 7})
    assert response.status_code == 200
    body = response.json()
    assert body["success"]
    assert body["histogram"]["shots"] == 5000
    assert body["criteria"]["shots"] == 5000

    again = client.post("/api/v1/simulate", json={"model": MODEL, "shots": 5000, "seed": 7}).json()
    assert again["histogram"] == body["histogram"]


def test_simulate_rejects_bad_model(client):
    bad = {**MODEL, "eta_s": 1.5}
    response = client.post("/api/v1/simulate", json={"model": bad, "shots": 100, "seed": 1})
    assert response.status_code == 422


def test_analyze(client):
    histogram = {"counts": [[40, 0, 0], [0, 35, 0], [0, 0, 25]], "shots": 100}
    response = client.post("/api/v1/analyze", json={"histogram": histogram})
    assert response.status_code == 200
    body = response.json()
    assert body["R"] == 0.0
    assert body["C"] == pytest.approx(1.0)
    assert body["flags"]["R"]


def test_analyze_rejects_inconsistent_histogram(client):
    histogram = {"counts": [[4, 1], [0, 2]], "shots": 10}
    response = client.post("/api/v1/analyze", json={"histogram": histogram})
    assert response.status_code == 422
    assert "expected 10 shots" in response.json()["detail"]


def test_reconstruct_rejects_small_samples(client):
    histogram = {"counts": [[4, 1], [0, 2]], "shots": 7}
    response = client.post("/api/v1/reconstruct", json={"histogram": histogram})
    assert response.status_code == 422


def test_intensity_of_a_model(client):
    payload = {"model": IDEAL, "grid": {"which": "photons", "order": 5, "damping": 0.5, "points": 11,
                                        "w_max": 4.0, "allow_singular": True}}
    response = client.post("/api/v1/intensity", json=payload)
    assert response.status_code == 200
    body = response.json()
    assert len(body["values"]) == 11 and len(body["values"][0]) == 11
    assert body["axis_s"][-1] == pytest.approx(4.0)
    assert body["metadata"]["order"] == 5
    assert body["negativity"]["eps_neg"] > 0


def test_intensity_needs_exactly_one_source(client):
    response = client.post("/api/v1/intensity", json={})
    assert response.status_code == 422
    histogram = {"counts": [[1]], "shots": 1}
    response = client.post("/api/v1/intensity", json={"model": IDEAL, "histogram": histogram})
    assert response.status_code == 422


def test_singular_histogram_is_unprocessable(client):
    histogram = {"counts": [[10]], "shots": 10}
    response = client.post("/api/v1/intensity", json={"histogram": histogram, "grid": {"which": "detected"}})
    assert response.status_code == 422
    assert "singular" in response.json()["detail"]
