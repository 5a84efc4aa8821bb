"""Regenerate the frontend test fixtures from a real service instance.

Run from the repository root:

    python3 frontend/scripts/make_fixtures.py

Trains a small deterministic model, spins up the HTTP app in-process, and
dumps canonical request/response payloads the vitest suite replays. Keeping
the fixtures machine-generated means the UI tests break loudly whenever the
service contract drifts.
"""

import json
from pathlib import Path

from fastapi.testclient import TestClient

from tractflow import synthetic
from tractflow.encoder import GatConfig
from tractflow.gbrt import BoostConfig
from tractflow.model import train_model
from tractflow.service import create_app
from tractflow.training import TrainConfig

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def build_model():
    cfg = synthetic.WorldConfig(n_tracts=12, box_km=4.0, neighbors=3,
                                gravity_constant=0.4)
    graph, flows, schema = synthetic.gravity_world(seed=3, config=cfg)
    return train_model(
        graph, flows, schema,
        GatConfig(layers=2, hidden_dim=4, embedding_dim=4),
        TrainConfig(epochs=3, batch_size=64, lr=0.005, optimizer="adam",
                    log_targets=True, seed=0),
        BoostConfig(rounds=10))


def dump(name: str, payload) -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / name).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"wrote {name}")


def main() -> None:
    client = TestClient(create_app(model=build_model()))

    dump("health.json", client.get("/health").json())
    dump("tracts.json", client.get("/tracts").json())

    bike = {"name": "riverside bike lanes",
            "edits": [{"tract_id": "t02", "indicator": "bike_lane_km",
                       "op": "add", "value": 6.0},
                      {"tract_id": "t05", "indicator": "bike_lane_km",
                       "op": "add", "value": 6.0}]}
    dump("scenario_bike.json", bike)
    r = client.post("/scenarios", json=bike)
    assert r.status_code == 201, r.text
    dump("submit_created.json", r.json())
    bike_id = r.json()["id"]
    dump("diff_bike.json",
         client.get(f"/scenarios/{bike_id}/diff",
                    params={"radius_km": 2.0, "bins": 8}).json())

    empty = {"name": "do nothing", "edits": []}
    rid = client.post("/scenarios", json=empty).json()["id"]
    dump("diff_empty.json", client.get(f"/scenarios/{rid}/diff").json())

    dup = {"name": "riverside bike lanes",
           "edits": [{"tract_id": "t01", "indicator": "mass",
                      "op": "add", "value": 1.0}]}
    r = client.post("/scenarios", json=dup)
    assert r.status_code == 409, r.text
    dump("error_duplicate_name.json",
         {"status": 409, "body": r.json()})

    bad_tract = {"name": "x1", "edits": [{"tract_id": "nowhere",
                                          "indicator": "mass",
                                          "op": "set", "value": 1.0}]}
    r = client.post("/scenarios", json=bad_tract)
    assert r.status_code == 422, r.text
    dump("error_unknown_tract.json", {"status": 422, "body": r.json()})

    bad_ind = {"name": "x2", "edits": [{"tract_id": "t01",
                                        "indicator": "tram_stops",
                                        "op": "set", "value": 1.0}]}
    r = client.post("/scenarios", json=bad_ind)
    assert r.status_code == 422, r.text
    dump("error_unknown_indicator.json", {"status": 422, "body": r.json()})

    negative = {"name": "x3", "edits": [{"tract_id": "t01",
                                         "indicator": "mass",
                                         "op": "add", "value": -1e9}]}
    r = client.post("/scenarios", json=negative)
    assert r.status_code == 422, r.text
    dump("error_negative_value.json", {"status": 422, "body": r.json()})

    dump("scenario_list.json", client.get("/scenarios").json())


if __name__ == "__main__":
    main()
