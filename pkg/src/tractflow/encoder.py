"""Dual graph-attention encoders for origin and destination tract roles.

Each encoder stacks attention layers over the geo-adjacency network. A node
aggregates transformed features from itself and its neighbors with softmax
attention whose logits are damped multiplicatively by exp(-d/scale), so
nearby tracts speak louder than distant ones. The origin and destination
encoders share one configuration but never share parameters, which lets the
two embedding spaces specialize.

Aggregation order within every node follows sorted neighbor tract ids, making
the encoding exactly equivariant under tract reordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from . import autodiff as ad
from .errors import SchemaMismatch
from .geodata import FeatureSchema, TractGraph

ORIGIN_NS = "origin_encoder"
DESTINATION_NS = "destination_encoder"


@dataclass(frozen=True)
class GatConfig:
    layers: int = 2
    hidden_dim: int = 64
    embedding_dim: int = 64
    attention_heads: int = 1
    distance_scale_km: float = 5.0

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if min(self.hidden_dim, self.embedding_dim, self.attention_heads) < 1:
            raise ValueError("dimensions and head count must be positive")
        if self.distance_scale_km <= 0:
            raise ValueError("distance_scale_km must be > 0")
        if self.hidden_dim % self.attention_heads or self.embedding_dim % self.attention_heads:
            raise ValueError("hidden_dim and embedding_dim must divide attention_heads")

    def layer_dims(self, n_features: int) -> list[tuple[int, int]]:
        dims = []
        for layer in range(self.layers):
            d_in = n_features if layer == 0 else self.hidden_dim
            d_out = self.embedding_dim if layer == self.layers - 1 else self.hidden_dim
            dims.append((d_in, d_out))
        return dims

    def to_dict(self) -> dict:
        return {
            "layers": self.layers,
            "hidden_dim": self.hidden_dim,
            "embedding_dim": self.embedding_dim,
            "attention_heads": self.attention_heads,
            "distance_scale_km": self.distance_scale_km,
        }

    @staticmethod
    def from_dict(d: Mapping) -> "GatConfig":
        return GatConfig(**d)


@dataclass(frozen=True)
class EmbeddingSet:
    """Per-tract origin and destination embeddings (n_tracts x embedding_dim)."""

    origin: np.ndarray
    destination: np.ndarray

    def __post_init__(self):
        if self.origin.shape != self.destination.shape:
            raise SchemaMismatch("origin/destination embedding shapes differ")
        if not (np.isfinite(self.origin).all() and np.isfinite(self.destination).all()):
            raise SchemaMismatch("non-finite embedding values")


class EdgeStructure:
    """Flattened aggregation edges for one graph: (contributor, target, decay).

    Every node carries a self-edge with decay 1 so its own indicators survive
    aggregation. Edges are grouped by target node, ordered by contributor
    tract id inside each group.
    """

    def __init__(self, graph: TractGraph, distance_scale_km: float):
        src, dst, decay = [], [], []
        for i in range(len(graph)):
            entries = [(i, 0.0)] + list(graph.neighbors(i))
            entries.sort(key=lambda jd: graph.tracts[jd[0]].id)
            for j, d in entries:
                src.append(j)
                dst.append(i)
                decay.append(math.exp(-d / distance_scale_km))
        self.src = np.array(src, dtype=int)
        self.dst = np.array(dst, dtype=int)
        self.decay = np.array(decay, dtype=float).reshape(-1, 1)
        self.n_nodes = len(graph)


def init_encoder_params(store: ad.ParamStore, namespace: str,
                        n_features: int, config: GatConfig) -> None:
    """Create one encoder's weight/attention/bias tensors under ``namespace``."""
    for layer, (d_in, d_out) in enumerate(config.layer_dims(n_features)):
        head_dim = d_out // config.attention_heads
        for head in range(config.attention_heads):
            base = f"{namespace}.layer{layer}.head{head}"
            store.add(f"{base}.weight", d_in, head_dim)
            store.add(f"{base}.att_src", head_dim, 1)
            store.add(f"{base}.att_dst", head_dim, 1)
            store.add(f"{base}.bias", 1, head_dim, init="zeros")


def init_dual_params(store: ad.ParamStore, n_features: int, config: GatConfig) -> None:
    init_encoder_params(store, ORIGIN_NS, n_features, config)
    init_encoder_params(store, DESTINATION_NS, n_features, config)


def encode_tensor(features: ad.Tensor, edges: EdgeStructure, store: ad.ParamStore,
                  namespace: str, config: GatConfig,
                  collect_attention: Optional[list] = None) -> ad.Tensor:
    """Run one encoder over normalized features, returning an (n x dim) tensor.

    ``collect_attention`` (if given) receives, per layer, the per-head
    attention columns aligned with the edge structure.
    """
    h = features
    n = edges.n_nodes
    for layer in range(config.layers):
        head_outputs = []
        layer_alphas = []
        for head in range(config.attention_heads):
            base = f"{namespace}.layer{layer}.head{head}"
            z = h @ store[f"{base}.weight"]
            s_src = z @ store[f"{base}.att_src"]
            s_dst = z @ store[f"{base}.att_dst"]
            logits = ad.leaky_relu(
                ad.gather_rows(s_src, edges.src) + ad.gather_rows(s_dst, edges.dst))
            logits = ad.scale(logits, edges.decay)
            alpha = ad.segment_softmax(logits, edges.dst, n)
            if collect_attention is not None:
                layer_alphas.append(alpha.data[:, 0].copy())
            msg = ad.mul(alpha, ad.gather_rows(z, edges.src))
            agg = ad.segment_sum(msg, edges.dst, n)
            head_outputs.append(agg + store[f"{base}.bias"])
        out = head_outputs[0] if len(head_outputs) == 1 else ad.concat_cols(head_outputs)
        h = out if layer == config.layers - 1 else ad.leaky_relu(out)
        if collect_attention is not None:
            collect_attention.append(layer_alphas)
    return h


def _check_schema(graph: TractGraph, schema: FeatureSchema) -> None:
    if graph.n_features != len(schema):
        raise SchemaMismatch(
            f"graph has {graph.n_features} features, schema expects {len(schema)}")


def encode(graph: TractGraph, store: ad.ParamStore, config: GatConfig,
           schema: FeatureSchema) -> EmbeddingSet:
    """Embed every tract in both roles using frozen parameters.

    Features are normalized with the schema's training-time stats first.
    Deterministic: same graph + parameters always give identical embeddings.
    """
    _check_schema(graph, schema)
    feats = ad.constant(schema.normalize(graph.feature_matrix))
    edges = EdgeStructure(graph, config.distance_scale_km)
    origin = encode_tensor(feats, edges, store, ORIGIN_NS, config)
    destination = encode_tensor(feats, edges, store, DESTINATION_NS, config)
    return EmbeddingSet(origin.data.copy(), destination.data.copy())


def attention_coefficients(graph: TractGraph, store: ad.ParamStore, config: GatConfig,
                           schema: FeatureSchema, namespace: str = ORIGIN_NS
                           ) -> list[list[list[list[tuple[str, float]]]]]:
    """Attention weights per layer, head, and node.

    Returns ``out[layer][head][node]`` as a list of (contributor tract id,
    weight) covering the node itself plus its neighbors; each list sums to 1.
    """
    _check_schema(graph, schema)
    feats = ad.constant(schema.normalize(graph.feature_matrix))
    edges = EdgeStructure(graph, config.distance_scale_km)
    collected: list = []
    encode_tensor(feats, edges, store, namespace, config, collect_attention=collected)
    out = []
    for layer_alphas in collected:
        layer_entry = []
        for alpha in layer_alphas:
            per_node = [[] for _ in range(edges.n_nodes)]
            for e in range(len(edges.src)):
                per_node[edges.dst[e]].append(
                    (graph.tracts[edges.src[e]].id, float(alpha[e])))
            layer_entry.append(per_node)
        out.append(layer_entry)
    return out
