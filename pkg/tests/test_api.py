import pytest
from fastapi.testclient import TestClient

from app.main import app


@pytest.fixture
def client():
    return TestClient(app)


class TestExperimentRoutes:
    def test_root(self, client):
        response = client.get("/")
        assert response.status_code == 200
        assert response.json()["message"] == "DLR Heat Solver"

    def test_test_endpoint(self, client):
        response = client.get("/api/v1/experiments/test")
        assert response.status_code == 200
        assert response.json()["status"] == "success"

    def test_constants(self, client, config_data):
        response = client.post("/api/v1/experiments/constants", json=config_data)
        assert response.status_code == 200
        assert response.json()["n_per_side"] == 7

    def test_decay(self, client, config_data):
        response = client.post("/api/v1/experiments/decay", json=config_data)
        assert response.status_code == 200
        body = response.json()
        assert body["status"] == "decayed"
        assert body["rows"][0]["step"] == 0

    def test_invalid_config(self, client, config_data):
        config_data["dlr"]["R"] = 50
        response = client.post("/api/v1/experiments/decay", json=config_data)
        assert response.status_code == 422

    def test_sweep_rejects_two_grids(self, client, config_data):
        request = {"config": config_data, "n_per_side": [7], "dt": [1.0], "ratio": [10.0]}
        response = client.post("/api/v1/experiments/sweep", json=request)
        assert response.status_code == 422

    def test_sweep(self, client, config_data):
        request = {"config": config_data, "n_per_side": [7], "dt": [1.0]}
        response = client.post("/api/v1/experiments/sweep", json=request)
        assert response.status_code == 200
        assert response.json()["cells"][0]["status"] == "decayed"

    def test_compare_schemes(self, client, config_data):
        response = client.post("/api/v1/experiments/compare-schemes", json={"config": config_data, "steps": 2})
        assert response.status_code == 200
        assert len(response.json()["rows"]) == 2

    def test_compare_projection_needs_semi_implicit(self, client, config_data):
        config_data["scheme"] = {"name": "explicit", "dt": 0.001}
        response = client.post("/api/v1/experiments/compare-projection", json={"config": config_data, "dt": [0.001]})
        assert response.status_code == 422
        assert "semi_implicit" in response.json()["detail"]

    def test_compare_projection_rejects_negative_step(self, client, config_data):
        response = client.post("/api/v1/experiments/compare-projection", json={"config": config_data, "dt": [-1.0]})
        assert response.status_code == 422
        assert response.json()["detail"][0]["loc"] == ["scheme", "dt"]
