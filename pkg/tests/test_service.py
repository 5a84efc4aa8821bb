import json
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from fastapi.testclient import TestClient

from tractflow.scenario import Scenario, ScenarioEdit, evaluate_scenario
from tractflow.service import create_app


@pytest.fixture()
def client(small_model):
    return TestClient(create_app(model=small_model))


def _bike_doc(graph, n=2, name="bike lanes"):
    return {
        "name": name,
        "edits": [{"tract_id": t.id, "indicator": "bike_lane_km",
                   "op": "add", "value": 6.0} for t in graph.tracts[:n]],
    }


# ---------------------------------------------------------------------------
# Health and read endpoints
# ---------------------------------------------------------------------------

def test_health_reports_model_size(client, small_model):
    body = client.get("/health").json()
    assert body == {"status": "ok", "tracts": len(small_model.graph),
                    "pairs": len(small_model.flows)}


def test_endpoints_without_checkpoint_return_503():
    bare = TestClient(create_app())
    assert bare.get("/health").json()["status"] == "no checkpoint"
    assert bare.get("/tracts").status_code == 503
    assert bare.get("/flows/baseline").status_code == 503
    assert bare.post("/scenarios", json={"name": "x", "edits": []}).status_code == 503


def test_tracts_listing_is_complete_sorted_and_stable(client, small_model):
    first = client.get("/tracts").json()
    ids = [t["id"] for t in first["tracts"]]
    assert len(ids) == len(small_model.graph)
    assert ids == sorted(ids)
    schema = small_model.schema
    assert [i["name"] for i in first["indicators"]] == list(schema.names)
    assert [i["category"] for i in first["indicators"]] == list(schema.categories)
    assert [i["nonnegative"] for i in first["indicators"]] == list(schema.nonnegative)
    one = first["tracts"][0]
    assert set(one) == {"id", "centroid", "indicators"}
    assert set(one["indicators"]) == set(schema.names)
    assert client.get("/tracts").json() == first


def test_baseline_flows_match_model_predictions(client, small_model):
    body = client.get("/flows/baseline").json()
    records = small_model.flows.records
    assert len(body["flows"]) == len(records)
    predicted = small_model.predict_pairs([(r.origin, r.dest) for r in records])
    for row, rec, pred in zip(body["flows"], records, predicted):
        assert row["origin"] == rec.origin
        assert row["destination"] == rec.dest
        assert row["observed"] == rec.commuters
        assert row["split"] == rec.split
        assert row["predicted"] == float(pred)


# ---------------------------------------------------------------------------
# Scenario submission
# ---------------------------------------------------------------------------

def test_submit_then_identical_resubmit(client, small_model):
    doc = _bike_doc(small_model.graph)
    first = client.post("/scenarios", json=doc)
    assert first.status_code == 201
    body = first.json()
    assert body["created"] is True
    assert body["id"] == Scenario.from_dict(doc).content_hash()

    again = client.post("/scenarios", json=doc)
    assert again.status_code == 200
    assert again.json() == {"id": body["id"], "name": doc["name"],
                            "created": False}


def test_submit_validation_failures(client, small_model):
    graph = small_model.graph
    cases = [
        {"name": "x", "edits": [{"tract_id": "zzz", "indicator": "mass",
                                 "op": "set", "value": 1.0}]},
        {"name": "x", "edits": [{"tract_id": graph.tracts[0].id,
                                 "indicator": "altitude", "op": "set",
                                 "value": 1.0}]},
        {"name": "x", "edits": [{"tract_id": graph.tracts[0].id,
                                 "indicator": "mass", "op": "set",
                                 "value": -5.0}]},
        {"name": "", "edits": []},
        {"edits": []},
        {"name": "x", "edits": [{"tract_id": graph.tracts[0].id}]},
    ]
    for doc in cases:
        resp = client.post("/scenarios", json=doc)
        assert resp.status_code == 422, doc

    raw = client.post("/scenarios", content=b"{not json",
                      headers={"content-type": "application/json"})
    assert raw.status_code == 422


def test_duplicate_name_with_different_content_conflicts(client, small_model):
    graph = small_model.graph
    assert client.post("/scenarios",
                       json=_bike_doc(graph, n=1)).status_code == 201
    resp = client.post("/scenarios", json=_bike_doc(graph, n=2))
    assert resp.status_code == 409
    assert "bike lanes" in resp.json()["detail"]


def test_scenario_listing_sorted_by_name(client, small_model):
    graph = small_model.graph
    for name in ("zebra", "alpha", "middle"):
        assert client.post("/scenarios",
                           json=_bike_doc(graph, name=name)).status_code == 201
    listing = client.get("/scenarios").json()["scenarios"]
    assert [s["name"] for s in listing] == ["alpha", "middle", "zebra"]
    assert all(s["edits"] == 2 for s in listing)


# ---------------------------------------------------------------------------
# Diff endpoint
# ---------------------------------------------------------------------------

def _submit(client, doc):
    resp = client.post("/scenarios", json=doc)
    assert resp.status_code in (200, 201)
    return resp.json()["id"]


def test_diff_equals_engine_output(client, small_model):
    doc = _bike_doc(small_model.graph)
    sid = _submit(client, doc)
    got = client.get(f"/scenarios/{sid}/diff",
                     params={"radius_km": 2.0, "bins": 12}).json()
    expected = evaluate_scenario(small_model, Scenario.from_dict(doc),
                                 radius_km=2.0, bins=12)
    # through-JSON comparison: floats survive exactly via repr round-trip
    assert got == json.loads(json.dumps(expected))


def test_diff_empty_scenario_mean_zero(client):
    sid = _submit(client, {"name": "noop", "edits": []})
    body = client.get(f"/scenarios/{sid}/diff").json()
    assert body["summary"]["mean_relative_change"] == 0.0
    assert body["summary"]["std_relative_change"] == 0.0
    assert all(p["relative_change"] == 0.0 for p in body["diff"]["pairs"])


def test_diff_unknown_scenario_404(client):
    assert client.get("/scenarios/feedfacecafebeef/diff").status_code == 404


def test_diff_parameter_validation(client, small_model):
    sid = _submit(client, _bike_doc(small_model.graph))
    assert client.get(f"/scenarios/{sid}/diff",
                      params={"bins": 0}).status_code == 422
    assert client.get(f"/scenarios/{sid}/diff",
                      params={"radius_km": -1.0}).status_code == 422


def test_diff_no_defined_pairs_422(client, small_model):
    # a single edited tract with a radius smaller than any centroid gap:
    # the filter keeps no OD pair at all
    doc = {"name": "lonely", "edits": [
        {"tract_id": small_model.graph.tracts[0].id, "indicator": "mass",
         "op": "add", "value": 1.0}]}
    sid = _submit(client, doc)
    resp = client.get(f"/scenarios/{sid}/diff", params={"radius_km": 1e-6})
    assert resp.status_code == 422


def test_diff_cache_returns_identical_payload(client, small_model):
    sid = _submit(client, _bike_doc(small_model.graph))
    a = client.get(f"/scenarios/{sid}/diff", params={"bins": 10}).json()
    b = client.get(f"/scenarios/{sid}/diff", params={"bins": 10}).json()
    assert a == b
    c = client.get(f"/scenarios/{sid}/diff", params={"bins": 5}).json()
    assert len(c["summary"]["histogram"]["counts"]) == 5
    assert c["summary"]["mean_relative_change"] == a["summary"]["mean_relative_change"]


def test_concurrent_diffs_match_serial_and_leave_model_untouched(small_model):
    app = create_app(model=small_model)
    setup = TestClient(app)
    graph = small_model.graph
    docs = [{"name": f"edit {i}", "edits": [
        {"tract_id": graph.tracts[i].id, "indicator": "mass",
         "op": "add", "value": float(i + 1)}]} for i in range(6)]
    sids = [_submit(setup, doc) for doc in docs]
    serial = [setup.get(f"/scenarios/{sid}/diff").json() for sid in sids]

    features_before = graph.feature_matrix.copy()
    fresh = TestClient(create_app(model=small_model))
    for sid in sids:  # fresh app: no scenarios yet
        assert fresh.get(f"/scenarios/{sid}/diff").status_code == 404
    for doc in docs:
        _submit(fresh, doc)

    def fetch(sid):
        return TestClient(app).get(f"/scenarios/{sid}/diff").json()

    with ThreadPoolExecutor(max_workers=6) as pool:
        concurrent = list(pool.map(fetch, sids))
    assert concurrent == serial
    assert np.array_equal(graph.feature_matrix, features_before)
