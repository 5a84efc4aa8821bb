"""The trained model bundle and its versioned checkpoint.

A :class:`TrainedModel` is self-contained: encoder and head parameters from
the best validation epoch, the fitted tree ensemble, the feature schema with
its normalization stats, the base graph, the observed flow table with split
labels, and the distance provider. Everything needed to evaluate splits or
run scenarios reloads from one JSON checkpoint, and serialization is
deterministic so identical training runs produce byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import autodiff as ad
from . import gbrt, metrics
from .encoder import EmbeddingSet, GatConfig, encode
from .errors import MissingInput, SchemaMismatch, UnknownSplit, UnknownTract
from .geodata import (FeatureSchema, FlowTable, GreatCircleDistance, TractGraph,
                      distance_provider_from_dict)
from .training import TrainConfig, TrainResult, train

CHECKPOINT_FORMAT_VERSION = 1
CHECKPOINT_KIND = "tractflow-checkpoint"


@dataclass
class TrainedModel:
    schema: FeatureSchema
    gat_config: GatConfig
    train_config: TrainConfig
    boost_config: gbrt.BoostConfig
    store: ad.ParamStore
    ensemble: gbrt.TreeEnsemble
    graph: TractGraph
    flows: FlowTable
    distance_provider: object
    train_result: Optional[TrainResult] = None
    _dmat: Optional[np.ndarray] = None
    _base_embeddings: Optional[EmbeddingSet] = None

    @property
    def dmat(self) -> np.ndarray:
        if self._dmat is None:
            self._dmat = self.distance_provider.pairwise(self.graph.tracts)
        return self._dmat

    def embeddings(self, graph: Optional[TractGraph] = None) -> EmbeddingSet:
        """Embed all tracts of ``graph`` (default: the base graph) in both roles."""
        if graph is None or graph is self.graph:
            if self._base_embeddings is None:
                self._base_embeddings = encode(self.graph, self.store,
                                               self.gat_config, self.schema)
            return self._base_embeddings
        return encode(graph, self.store, self.gat_config, self.schema)

    def _pair_indices(self, pairs: Sequence[tuple[str, str]]) -> tuple[np.ndarray, np.ndarray]:
        index = self.graph.index_of
        try:
            oi = np.array([index[o] for o, _ in pairs], dtype=int)
            di = np.array([index[d] for _, d in pairs], dtype=int)
        except KeyError as exc:
            raise UnknownTract(f"pair references unknown tract {exc.args[0]!r}") from None
        return oi, di

    def predict_pairs(self, pairs: Sequence[tuple[str, str]],
                      graph: Optional[TractGraph] = None,
                      emb: Optional[EmbeddingSet] = None) -> np.ndarray:
        """Predicted commuter counts for OD pairs; clamped at 0.

        ``graph`` switches the indicator values being encoded (scenario
        graphs share the base topology, so distances stay those of the base
        graph). Precomputed ``emb`` short-circuits encoding.
        """
        if not pairs:
            return np.zeros(0)
        if emb is None:
            emb = self.embeddings(graph)
        oi, di = self._pair_indices(pairs)
        X = gbrt.make_feature_matrix(emb.origin[oi], emb.destination[di],
                                     self.dmat[oi, di])
        raw = self.ensemble.predict_raw(X)
        if self.train_config.log_targets:
            raw = np.expm1(raw)
        return np.maximum(0.0, raw)

    def predict_map(self, pairs: Sequence[tuple[str, str]],
                    graph: Optional[TractGraph] = None) -> dict[tuple[str, str], float]:
        values = self.predict_pairs(pairs, graph)
        return {pair: float(v) for pair, v in zip(pairs, values)}

    def evaluate(self, split: str, flows: Optional[FlowTable] = None) -> metrics.EvalReport:
        """RMSE/MAE/CPC of the deployed predictor on one dataset split."""
        table = flows if flows is not None else self.flows
        if split not in ("train", "val", "test"):
            raise UnknownSplit(f"unknown split {split!r}")
        records = table.by_split(split)
        truth = {(r.origin, r.dest): float(r.commuters) for r in records}
        pred = self.predict_map(sorted(truth))
        return metrics.evaluate(pred, truth, split)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "kind": CHECKPOINT_KIND,
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "schema": self.schema.to_dict(),
            "gat_config": self.gat_config.to_dict(),
            "train_config": self.train_config.to_dict(),
            "boost_config": self.boost_config.to_dict(),
            "params": self.store.to_dict(),
            "ensemble": self.ensemble.to_dict(),
            "graph": self.graph.to_dict(),
            "flows": self.flows.to_list(),
            "distance_provider": self.distance_provider.to_dict(),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), separators=(",", ":")) + "\n")

    @staticmethod
    def from_dict(d: dict) -> "TrainedModel":
        if d.get("kind") != CHECKPOINT_KIND:
            raise SchemaMismatch("not a tractflow checkpoint")
        if d.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise SchemaMismatch(
                f"unsupported checkpoint version {d.get('format_version')!r}")
        return TrainedModel(
            schema=FeatureSchema.from_dict(d["schema"]),
            gat_config=GatConfig.from_dict(d["gat_config"]),
            train_config=TrainConfig.from_dict(d["train_config"]),
            boost_config=gbrt.BoostConfig.from_dict(d["boost_config"]),
            store=ad.ParamStore.from_dict(d["params"]),
            ensemble=gbrt.TreeEnsemble.from_dict(d["ensemble"]),
            graph=TractGraph.from_dict(d["graph"]),
            flows=FlowTable.from_list(d["flows"]),
            distance_provider=distance_provider_from_dict(d["distance_provider"]),
        )

    @staticmethod
    def load(path: str | Path) -> "TrainedModel":
        path = Path(path)
        if not path.exists():
            raise MissingInput(str(path))
        return TrainedModel.from_dict(json.loads(path.read_text()))


def train_model(graph: TractGraph, flows: FlowTable, schema: FeatureSchema,
                gat_config: GatConfig = GatConfig(),
                train_config: TrainConfig = TrainConfig(),
                boost_config: gbrt.BoostConfig = gbrt.BoostConfig(),
                distance_provider=None) -> TrainedModel:
    """Full pipeline: encoders end-to-end, then boosted trees on embeddings.

    The schema passed in may be stat-less; normalization stats are captured
    here from the training graph and stored with the model.
    """
    provider = distance_provider or GreatCircleDistance()
    if schema.mean is None:
        schema = schema.with_stats(graph.feature_matrix)
    dmat = provider.pairwise(graph.tracts)

    result = train(graph, flows, schema, gat_config, train_config, dmat=dmat)

    emb = encode(graph, result.store, gat_config, schema)
    tr, va = result.train_pairs, result.val_pairs
    X_tr = gbrt.make_feature_matrix(emb.origin[tr.origin_idx],
                                    emb.destination[tr.dest_idx], tr.distance_km)
    fit_kwargs = {}
    if len(va):
        fit_kwargs = {
            "val_features": gbrt.make_feature_matrix(
                emb.origin[va.origin_idx], emb.destination[va.dest_idx], va.distance_km),
            "val_targets": va.target,
        }
    ensemble = gbrt.fit(X_tr, tr.target, config=boost_config, **fit_kwargs)

    model = TrainedModel(
        schema=schema, gat_config=gat_config, train_config=train_config,
        boost_config=boost_config, store=result.store, ensemble=ensemble,
        graph=graph, flows=flows, distance_provider=provider,
        train_result=result, _dmat=dmat,
    )
    model._base_embeddings = emb
    return model
