"""Commuting-flow modeling over census tracts.

Two graph-attention encoders embed every tract in an origin role and a
destination role from its urban indicators and geo-adjacency; a gradient
boosted tree model maps embedding pairs plus travel distance to commuter
counts; a scenario engine re-embeds edited indicators and reports how flows
shift. See the ``cli`` module for the end-to-end pipeline and ``service``
for the HTTP facade.
"""

from .autodiff import ParamStore, Tensor
from .encoder import EmbeddingSet, GatConfig, encode
from .errors import (DataError, NumericError, TractFlowError)
from .gbrt import BoostConfig, TreeEnsemble, fit, make_features
from .geodata import (FeatureSchema, FlowRecord, FlowTable, GreatCircleDistance,
                      KNearest, MatrixDistance, Radius, Tract, TractGraph,
                      build_graph, great_circle_km, load_flows, load_tracts,
                      split_flows)
from .metrics import EvalReport, cpc, evaluate, mae, rmse
from .model import TrainedModel, train_model
from .scenario import (FlowDiff, Scenario, ScenarioEdit, apply_scenario,
                       evaluate_scenario, neighborhood_pairs, predict_scenario,
                       summarize)
from .synthetic import WorldConfig, gravity_world
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "BoostConfig", "DataError", "EmbeddingSet", "EvalReport", "FeatureSchema",
    "FlowDiff", "FlowRecord", "FlowTable", "GatConfig", "GreatCircleDistance",
    "KNearest", "MatrixDistance", "NumericError", "ParamStore", "Radius",
    "Scenario", "ScenarioEdit", "Tensor", "Tract", "TractFlowError",
    "TractGraph", "TrainConfig", "TrainedModel", "TreeEnsemble", "WorldConfig",
    "apply_scenario", "build_graph", "cpc", "encode", "evaluate",
    "evaluate_scenario", "fit", "gravity_world", "great_circle_km",
    "load_flows", "load_tracts", "mae", "make_features", "neighborhood_pairs",
    "predict_scenario", "rmse", "split_flows", "summarize", "train",
    "train_model",
]
