"""HTTP facade over a trained checkpoint for interactive scenario work.

The model and base graph are loaded once and never mutated; requests only
read them. Submitted scenarios live in an in-process store keyed by content
hash, and diff evaluations are cached per (scenario, radius, bins), so
resubmitting identical content is free and results match the command-line
exporter field for field.
"""

from __future__ import annotations

import threading
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse

from .errors import NoDefinedPairs, TractFlowError
from .model import TrainedModel
from .scenario import (DEFAULT_DISTANCE_CUTOFF_KM, DEFAULT_HISTOGRAM_BINS,
                       Scenario, apply_scenario, evaluate_scenario)


class SessionState:
    """Frozen model plus the mutable scenario store and diff cache."""

    def __init__(self, model: Optional[TrainedModel]):
        self.model = model
        self.scenarios: dict[str, Scenario] = {}
        self.diff_cache: dict[tuple[str, Optional[float], int], dict] = {}
        self.lock = threading.Lock()

    def require_model(self) -> TrainedModel:
        if self.model is None:
            raise HTTPException(status_code=503, detail="no checkpoint loaded")
        return self.model


def create_app(checkpoint: Optional[str | Path] = None,
               model: Optional[TrainedModel] = None,
               static_dir: Optional[str | Path] = None) -> FastAPI:
    if model is None and checkpoint is not None:
        model = TrainedModel.load(checkpoint)
    state = SessionState(model)
    app = FastAPI(title="tractflow", docs_url=None, redoc_url=None)
    app.state.session = state

    @app.get("/health")
    def health():
        if state.model is None:
            return {"status": "no checkpoint", "tracts": 0, "pairs": 0}
        return {
            "status": "ok",
            "tracts": len(state.model.graph),
            "pairs": len(state.model.flows),
        }

    @app.get("/tracts")
    def tracts():
        m = state.require_model()
        schema = m.schema
        out = []
        for t in sorted(m.graph.tracts, key=lambda t: t.id):
            out.append({
                "id": t.id,
                "centroid": {"lat": t.lat, "lon": t.lon},
                "indicators": {n: float(v) for n, v in zip(schema.names, t.features)},
            })
        return {"tracts": out, "indicators": [
            {"name": n, "category": c, "nonnegative": nn}
            for n, c, nn in zip(schema.names, schema.categories, schema.nonnegative)
        ]}

    @app.get("/flows/baseline")
    def baseline():
        m = state.require_model()
        pairs = [(r.origin, r.dest) for r in m.flows.records]
        predicted = m.predict_pairs(pairs)
        return {"flows": [
            {"origin": r.origin, "destination": r.dest,
             "observed": r.commuters, "predicted": float(p), "split": r.split}
            for r, p in zip(m.flows.records, predicted)
        ]}

    @app.post("/scenarios")
    async def submit_scenario(request: Request):
        m = state.require_model()
        try:
            body = await request.json()
        except Exception:
            raise HTTPException(status_code=422, detail="body is not valid JSON")
        try:
            scenario = Scenario.from_dict(body)
        except (KeyError, TypeError, ValueError, TractFlowError) as e:
            raise HTTPException(status_code=422,
                                detail=f"malformed scenario document: {e}")
        if not scenario.name:
            raise HTTPException(status_code=422, detail="scenario needs a name")
        try:
            # dry-run the edits so bad tracts/indicators fail at submit time
            apply_scenario(m.graph, scenario, m.schema)
        except TractFlowError as e:
            raise HTTPException(status_code=422, detail=str(e))

        sid = scenario.content_hash()
        with state.lock:
            for other_id, other in state.scenarios.items():
                if other.name == scenario.name and other_id != sid:
                    raise HTTPException(
                        status_code=409,
                        detail=f"scenario name {scenario.name!r} already used "
                               f"with different content")
            created = sid not in state.scenarios
            state.scenarios.setdefault(sid, scenario)
        return JSONResponse(status_code=201 if created else 200,
                            content={"id": sid, "name": scenario.name,
                                     "created": created})

    @app.get("/scenarios")
    def list_scenarios():
        with state.lock:
            items = [
                {"id": sid, "name": s.name, "edits": len(s.edits)}
                for sid, s in sorted(state.scenarios.items(),
                                     key=lambda kv: kv[1].name)
            ]
        return {"scenarios": items}

    @app.get("/scenarios/{scenario_id}/diff")
    def scenario_diff(scenario_id: str, radius_km: Optional[float] = None,
                      bins: int = DEFAULT_HISTOGRAM_BINS,
                      cutoff_km: float = DEFAULT_DISTANCE_CUTOFF_KM):
        m = state.require_model()
        with state.lock:
            scenario = state.scenarios.get(scenario_id)
        if scenario is None:
            raise HTTPException(status_code=404,
                                detail=f"unknown scenario {scenario_id!r}")
        if bins < 1:
            raise HTTPException(status_code=422, detail="bins must be >= 1")
        if radius_km is not None and radius_km <= 0:
            raise HTTPException(status_code=422, detail="radius_km must be > 0")
        key = (scenario_id, radius_km, bins)
        with state.lock:
            cached = state.diff_cache.get(key)
        if cached is not None:
            return cached
        try:
            payload = evaluate_scenario(m, scenario, radius_km=radius_km,
                                        bins=bins, distance_cutoff_km=cutoff_km)
        except NoDefinedPairs as e:
            raise HTTPException(status_code=422, detail=str(e))
        with state.lock:
            state.diff_cache.setdefault(key, payload)
        return payload

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="ui")

    return app
