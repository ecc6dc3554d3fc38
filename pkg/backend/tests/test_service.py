import os

import pytest
from fastapi.testclient import TestClient

from app import deps
from app.config import settings
from app.discovery import HttpOracle
from app.main import app
from app.mapio import save_map


@pytest.fixture
def client(tmp_path, monkeypatch, office_floor):
    save_map(office_floor, tmp_path / "floor")
    save_map(office_floor, tmp_path / "packed.zip")
    monkeypatch.setattr(settings, "MAPS_DIR", tmp_path)
    with TestClient(app) as client:
        yield client


def test_list_maps(client):
    assert client.get("/maps").json() == {"maps": ["floor", "packed"]}


def test_map_summary(client):
    doc = client.get("/maps/packed").json()
    assert doc["rooms"] == ["corridor_1", "kitchen_1", "office_1", "office_2", "office_3", "office_4"]
    assert doc["objects"] == 6 and doc["edges"] == 5
    assert doc["layers"]["room_based_planning"] is True


def test_unknown_map_is_404(client):
    response = client.get("/maps/basement")
    assert response.status_code == 404
    assert response.json()["detail"].startswith("file not found")


def test_bad_map_name_is_400(client):
    assert client.get("/maps/.hidden").status_code == 400


def test_plan(client):
    response = client.post("/maps/floor/plan", json={"start": "office_1", "goal": "desk"})
    assert response.status_code == 200
    doc = response.json()
    assert doc["mode"] == "multi-target"
    assert doc["nodes"] == ["office_1", "corridor_1", "office_3", "desk_1"]


def test_plan_from_a_point_with_refinement(client):
    body = {"start": [5.75, 3.75], "goal": "office_2", "refine": True}
    doc = client.post("/maps/floor/plan", json=body).json()
    assert doc["waypoints"][0] == [5.75, 3.75]
    assert doc["metric_cost"] > 0


def test_plan_failures(client):
    response = client.post("/maps/floor/plan", json={"start": "0.25,0.25", "goal": "desk"})
    assert response.status_code == 400
    assert response.json()["failure_reason"] == "invalid-start"

    response = client.post("/maps/floor/plan", json={"start": "office_1", "goal": "unicorn", "oracle": "none"})
    assert response.status_code == 422
    assert response.json()["failure_reason"] == "discovery-failed"


def test_discovery_through_the_mock_oracle(client):
    doc = client.post("/maps/floor/plan", json={"start": "office_2", "goal": "coffee machine"}).json()
    assert doc["mode"] == "discovery"
    assert doc["nodes"][-1] == "kitchen_1"


def test_render(client):
    response = client.get("/maps/floor/render", params={"start": "office_1", "goal": "fridge_1"})
    assert response.status_code == 200
    assert response.headers["content-type"].startswith("image/svg+xml")
    assert response.text.count("<polyline") == 1
    assert "<polyline" not in client.get("/maps/floor/render").text


def test_validate(client, tmp_path):
    assert client.get("/maps/floor/validate").json() == {"ok": True, "violations": []}

    graph = tmp_path / "floor" / "graph.json"
    graph.write_text(graph.read_text().replace('"cell_count": 24', '"cell_count": 25', 1))
    doc = client.get("/maps/floor/validate").json()
    assert doc["ok"] is False and doc["violations"]
    assert client.get("/maps/floor").status_code == 500


def test_oracle_rank(client):
    body = {
        "goal": "coffee_machine",
        "rooms": [
            {"id": "kitchen_1", "category": "kitchen", "objects": ["fridge"]},
            {"id": "office_1", "category": "office", "objects": ["desk"]},
        ],
    }
    doc = client.post("/oracle/rank", json=body).json()
    assert [r["id"] for r in doc["ranking"]] == ["kitchen_1", "office_1"]
    assert doc["ranking"][0]["confidence"] == 1.0


def test_oracle_categorize(client):
    body = {"objects": ["fridge", "kettle"], "categories": ["kitchen", "office"]}
    assert client.post("/oracle/categorize", json=body).json() == {"category": "kitchen"}


def test_rewritten_map_replaces_its_cache_entry(client, tmp_path):
    first = deps.get_map("floor", tmp_path)
    assert deps.get_map("floor", tmp_path) is first
    for step in range(1, 6):
        for member in (tmp_path / "floor").iterdir():
            os.utime(member, (1_000_000 + step, 1_000_000 + step))
        latest = deps.get_map("floor", tmp_path)
    assert latest is not first and latest == first
    assert list(deps._maps) == [(tmp_path / "floor").resolve()]


def test_oracles_are_built_once_per_kind(client, monkeypatch):
    parsed = []
    real = deps.load_cooccurrence
    monkeypatch.setattr(deps, "load_cooccurrence", lambda path: parsed.append(path) or real(path))
    body = {"start": "office_2", "goal": "coffee machine"}
    for _ in range(3):
        assert client.post("/maps/floor/plan", json=body).status_code == 200
    assert client.get("/maps/floor/render", params={"start": "office_1", "goal": "kettle"}).status_code == 200
    assert len(parsed) <= 1
    assert deps.oracle_for("mock") is deps.oracle_for("mock")


def test_http_oracle_client_is_closed_on_shutdown(tmp_path, monkeypatch, office_floor):
    save_map(office_floor, tmp_path / "floor")
    monkeypatch.setattr(settings, "MAPS_DIR", tmp_path)
    monkeypatch.setattr(settings, "ORACLE_URL", "http://oracle.invalid/rank")
    with TestClient(app):
        oracle = deps.oracle_for("http")
        assert isinstance(oracle, HttpOracle)
        assert deps.oracle_for("http") is oracle
        assert not oracle._client.is_closed
    assert oracle._client.is_closed
