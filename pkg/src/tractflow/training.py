"""End-to-end training of the dual encoders with auxiliary flow totals.

The main task regresses per-pair commuter counts through a small affine head
on [origin embedding | destination embedding | exp(-d/scale)]; that head
exists only to shape the embeddings (deployment predicts with boosted trees).
Two auxiliary linear heads pull each tract's origin embedding toward its
total outflow and its destination embedding toward its total inflow,
constraining both spaces to stay predictive of flow mass.

Optimization is stochastic gradient descent over mini-batches of observed OD
pairs, with validation-based early stopping on the flow task alone.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from . import autodiff as ad
from .encoder import (DESTINATION_NS, ORIGIN_NS, EdgeStructure, GatConfig,
                      encode_tensor, init_dual_params)
from .errors import Diverged, EmptyInput, NonFiniteLoss
from .geodata import FeatureSchema, FlowTable, TractGraph

logger = logging.getLogger(__name__)

FLOW_HEAD = "flow_head"
OUTFLOW_HEAD = "outflow_head"
INFLOW_HEAD = "inflow_head"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 512
    lr: float = 0.005
    weight_decay: float = 0.0
    aux_weight_in: float = 0.5
    aux_weight_out: float = 0.5
    patience: int = 10
    seed: int = 0
    optimizer: str = "sgd"  # sgd | momentum | adam
    log_targets: bool = False  # regress log1p(counts) instead of raw counts
    zero_pairs: int = 0  # unobserved pairs added to training with target 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("epochs, batch_size, patience must be positive")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.aux_weight_in < 0 or self.aux_weight_out < 0:
            raise ValueError("aux weights must be >= 0")
        if self.zero_pairs < 0:
            raise ValueError("zero_pairs must be >= 0")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs, "batch_size": self.batch_size, "lr": self.lr,
            "weight_decay": self.weight_decay, "aux_weight_in": self.aux_weight_in,
            "aux_weight_out": self.aux_weight_out, "patience": self.patience,
            "seed": self.seed, "optimizer": self.optimizer,
            "log_targets": self.log_targets, "zero_pairs": self.zero_pairs,
        }

    @staticmethod
    def from_dict(d: Mapping) -> "TrainConfig":
        return TrainConfig(**d)


@dataclass(frozen=True)
class NodeTotals:
    """Per-tract totals over the train split: outflow[i] = sum_j T_ij, inflow[j] = sum_i T_ij."""

    outflow: np.ndarray
    inflow: np.ndarray

    def __post_init__(self):
        if (self.outflow < 0).any() or (self.inflow < 0).any():
            raise ValueError("totals must be nonnegative")
        if abs(self.outflow.sum() - self.inflow.sum()) > 1e-9:
            raise ValueError("outflow and inflow totals must balance")

    @staticmethod
    def from_flows(flows: FlowTable, graph: TractGraph, split: str = "train") -> "NodeTotals":
        outflow = np.zeros(len(graph))
        inflow = np.zeros(len(graph))
        for r in flows.by_split(split):
            outflow[graph.index_of[r.origin]] += r.commuters
            inflow[graph.index_of[r.dest]] += r.commuters
        return NodeTotals(outflow, inflow)


@dataclass
class PairArrays:
    """Observed pairs of one split in index form, ready for batching."""

    origin_idx: np.ndarray
    dest_idx: np.ndarray
    distance_km: np.ndarray
    target: np.ndarray

    def __len__(self) -> int:
        return len(self.target)


def pair_arrays(flows: FlowTable, graph: TractGraph, split: str,
                dmat: np.ndarray) -> PairArrays:
    records = flows.by_split(split)
    oi = np.array([graph.index_of[r.origin] for r in records], dtype=int)
    di = np.array([graph.index_of[r.dest] for r in records], dtype=int)
    return PairArrays(oi, di, dmat[oi, di],
                      np.array([r.commuters for r in records], dtype=float))


def init_head_params(store: ad.ParamStore, embedding_dim: int) -> None:
    store.add(f"{FLOW_HEAD}.weight", 2 * embedding_dim + 1, 1)
    store.add(f"{FLOW_HEAD}.bias", 1, 1, init="zeros")
    store.add(f"{OUTFLOW_HEAD}.weight", embedding_dim, 1)
    store.add(f"{OUTFLOW_HEAD}.bias", 1, 1, init="zeros")
    store.add(f"{INFLOW_HEAD}.weight", embedding_dim, 1)
    store.add(f"{INFLOW_HEAD}.bias", 1, 1, init="zeros")


def flow_head_tensor(store: ad.ParamStore, e_o: ad.Tensor, e_d: ad.Tensor,
                     decay: np.ndarray) -> ad.Tensor:
    x = ad.concat_cols([e_o, e_d, ad.constant(decay.reshape(-1, 1))])
    return (x @ store[f"{FLOW_HEAD}.weight"]) + store[f"{FLOW_HEAD}.bias"]


def training_flow_head(store: ad.ParamStore, e_origin: np.ndarray,
                       e_dest: np.ndarray, distance_km: float,
                       distance_scale_km: float) -> float:
    """Scalar flow prediction of the training-time head for one pair."""
    if not distance_km > 0:
        raise ValueError("distance must be > 0")
    decay = np.array([np.exp(-distance_km / distance_scale_km)])
    out = flow_head_tensor(store, ad.constant(np.atleast_2d(e_origin)),
                           ad.constant(np.atleast_2d(e_dest)), decay)
    return out.item()


def multitask_loss(store: ad.ParamStore, e_origin: ad.Tensor, e_dest: ad.Tensor,
                   batch: PairArrays, decay: np.ndarray, totals_out: np.ndarray,
                   totals_in: np.ndarray, aux_weight_out: float,
                   aux_weight_in: float) -> ad.Tensor:
    """Flow MSE plus weighted auxiliary outflow/inflow MSEs for one batch."""
    if len(batch) == 0:
        raise EmptyInput("empty batch")
    eo = ad.gather_rows(e_origin, batch.origin_idx)
    ed = ad.gather_rows(e_dest, batch.dest_idx)
    pred = flow_head_tensor(store, eo, ed, decay)
    loss = ad.mean_squared_error(pred, batch.target.reshape(-1, 1))
    if aux_weight_out > 0:
        out_pred = (eo @ store[f"{OUTFLOW_HEAD}.weight"]) + store[f"{OUTFLOW_HEAD}.bias"]
        out_t = totals_out[batch.origin_idx].reshape(-1, 1)
        loss = loss + ad.scale(ad.mean_squared_error(out_pred, out_t), aux_weight_out)
    if aux_weight_in > 0:
        in_pred = (ed @ store[f"{INFLOW_HEAD}.weight"]) + store[f"{INFLOW_HEAD}.bias"]
        in_t = totals_in[batch.dest_idx].reshape(-1, 1)
        loss = loss + ad.scale(ad.mean_squared_error(in_pred, in_t), aux_weight_in)
    return loss


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]  # snapshot of the best-validation epoch
    store: ad.ParamStore
    log: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_val: float = float("inf")
    train_pairs: Optional[PairArrays] = None  # as trained (zero pairs, transforms)
    val_pairs: Optional[PairArrays] = None

    def log_lines(self) -> list[str]:
        lines = ["epoch,train_loss,val_loss,lr"]
        for row in self.log:
            lines.append(f"{row['epoch']},{row['train_loss']!r},{row['val_loss']!r},{row['lr']!r}")
        return lines


def _sample_zero_pairs(rng: np.random.Generator, n_nodes: int, count: int,
                       observed: set[tuple[int, int]]) -> list[tuple[int, int]]:
    out: list[tuple[int, int]] = []
    guard = 0
    while len(out) < count and guard < count * 50:
        i = int(rng.integers(n_nodes))
        j = int(rng.integers(n_nodes))
        guard += 1
        if i == j or (i, j) in observed:
            continue
        observed.add((i, j))
        out.append((i, j))
    return out


def train(graph: TractGraph, flows: FlowTable, schema: FeatureSchema,
          gat_config: GatConfig, config: TrainConfig,
          dmat: Optional[np.ndarray] = None,
          distance_provider=None) -> TrainResult:
    """Train both encoders plus heads; return the best-validation parameters.

    Raises :class:`Diverged` after two consecutive non-finite batch losses
    (the learning rate is halved after the first).
    """
    flows.validate_ids(graph)
    train_records = flows.by_split("train")
    if not train_records:
        raise EmptyInput("train split is empty")

    if dmat is None:
        from .geodata import GreatCircleDistance
        provider = distance_provider or GreatCircleDistance()
        dmat = provider.pairwise(graph.tracts)

    store = ad.ParamStore(config.seed, optimizer=config.optimizer)
    init_dual_params(store, len(schema), gat_config)
    init_head_params(store, gat_config.embedding_dim)

    feats = ad.constant(schema.normalize(graph.feature_matrix))
    edges = EdgeStructure(graph, gat_config.distance_scale_km)

    tr = pair_arrays(flows, graph, "train", dmat)
    va = pair_arrays(flows, graph, "val", dmat)
    totals = NodeTotals.from_flows(flows, graph, "train")

    batch_rng = np.random.default_rng(config.seed + 1)
    if config.zero_pairs:
        observed = {(int(i), int(j)) for i, j in zip(tr.origin_idx, tr.dest_idx)}
        zeros = _sample_zero_pairs(batch_rng, len(graph), config.zero_pairs, observed)
        if zeros:
            zi = np.array([p[0] for p in zeros], dtype=int)
            zj = np.array([p[1] for p in zeros], dtype=int)
            tr = PairArrays(
                np.concatenate([tr.origin_idx, zi]),
                np.concatenate([tr.dest_idx, zj]),
                np.concatenate([tr.distance_km, dmat[zi, zj]]),
                np.concatenate([tr.target, np.zeros(len(zeros))]),
            )

    if config.log_targets:
        tr = PairArrays(tr.origin_idx, tr.dest_idx, tr.distance_km, np.log1p(tr.target))
        va = PairArrays(va.origin_idx, va.dest_idx, va.distance_km, np.log1p(va.target))
        totals_out = np.log1p(totals.outflow)
        totals_in = np.log1p(totals.inflow)
    else:
        totals_out = totals.outflow
        totals_in = totals.inflow

    decay_tr = np.exp(-tr.distance_km / gat_config.distance_scale_km)
    decay_va = np.exp(-va.distance_km / gat_config.distance_scale_km)

    def batch_loss(batch_idx: np.ndarray, _store: ad.ParamStore) -> ad.Tensor:
        e_o = encode_tensor(feats, edges, _store, ORIGIN_NS, gat_config)
        e_d = encode_tensor(feats, edges, _store, DESTINATION_NS, gat_config)
        sub = PairArrays(tr.origin_idx[batch_idx], tr.dest_idx[batch_idx],
                         tr.distance_km[batch_idx], tr.target[batch_idx])
        return multitask_loss(_store, e_o, e_d, sub, decay_tr[batch_idx],
                              totals_out, totals_in,
                              config.aux_weight_out, config.aux_weight_in)

    def val_flow_mse() -> float:
        e_o = encode_tensor(feats, edges, store, ORIGIN_NS, gat_config)
        e_d = encode_tensor(feats, edges, store, DESTINATION_NS, gat_config)
        eo = e_o.data[va.origin_idx]
        ed = e_d.data[va.dest_idx]
        x = np.concatenate([eo, ed, decay_va.reshape(-1, 1)], axis=1)
        pred = x @ store[f"{FLOW_HEAD}.weight"].data + store[f"{FLOW_HEAD}.bias"].data[0, 0]
        return float(np.mean((pred[:, 0] - va.target) ** 2))

    result = TrainResult(params={}, store=store)
    lr = config.lr
    nonfinite_streak = 0
    stale = 0
    n_train = len(tr)

    for epoch in range(config.epochs):
        order = batch_rng.permutation(n_train)
        loss_sum = 0.0
        seen = 0
        for start in range(0, n_train, config.batch_size):
            batch_idx = order[start:start + config.batch_size]
            try:
                value = ad.forward_backward(batch_idx, store, batch_loss)
            except NonFiniteLoss:
                nonfinite_streak += 1
                if nonfinite_streak >= 2:
                    raise Diverged("non-finite loss twice in a row")
                lr *= 0.5
                logger.warning("non-finite loss; halving lr to %g", lr)
                store.zero_grads()
                continue
            nonfinite_streak = 0
            store.step(lr, config.weight_decay)
            loss_sum += value * len(batch_idx)
            seen += len(batch_idx)

        train_loss = loss_sum / max(seen, 1)
        val_loss = val_flow_mse() if len(va) else train_loss
        result.log.append({"epoch": epoch, "train_loss": train_loss,
                           "val_loss": val_loss, "lr": lr})
        if val_loss < result.best_val:
            result.best_val = val_loss
            result.best_epoch = epoch
            result.params = store.snapshot()
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break

    if not result.params:  # every epoch diverged-but-recovered; keep last state
        result.params = store.snapshot()
        result.best_epoch = len(result.log) - 1
    store.restore(result.params)
    result.train_pairs = tr
    result.val_pairs = va
    return result
