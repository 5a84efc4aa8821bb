"""What-if scenarios: edit tract indicators, re-embed, and diff the flows.

A scenario is a named list of indicator edits (absolute ``set`` or additive
``add``). Applying one gives a new graph with identical topology and
distances; flows are then re-predicted with the frozen model on the modified
graph and compared pair by pair against the baseline. Relative change is
(scenario - baseline) / baseline and is only defined for pairs with positive
baseline flow; zero-baseline pairs are reported separately with absolute
values instead of infinities.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import (MissingInput, NegativeForbidden, NoDefinedPairs,
                     NonFiniteValue, SchemaMismatch, UnknownIndicator,
                     UnknownTract)
from .geodata import FeatureSchema, TractGraph, great_circle_km
from .model import TrainedModel

DEFAULT_HISTOGRAM_BINS = 40
DEFAULT_DISTANCE_CUTOFF_KM = 30.0


@dataclass(frozen=True)
class ScenarioEdit:
    tract_id: str
    indicator: str
    op: str  # "set" | "add"
    value: float

    def __post_init__(self):
        if self.op not in ("set", "add"):
            raise NonFiniteValue(-1, "op", self.op)
        if not np.isfinite(self.value):
            raise NonFiniteValue(-1, "value", repr(self.value))


@dataclass(frozen=True)
class Scenario:
    name: str
    edits: tuple[ScenarioEdit, ...]
    note: str = ""

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "edits": [
                {"tract_id": e.tract_id, "indicator": e.indicator,
                 "op": e.op, "value": e.value}
                for e in self.edits
            ],
        }
        if self.note:
            d["note"] = self.note
        return d

    @staticmethod
    def from_dict(d: Mapping) -> "Scenario":
        edits = tuple(
            ScenarioEdit(str(e["tract_id"]), str(e["indicator"]),
                         str(e.get("op", "set")), float(e["value"]))
            for e in d.get("edits", [])
        )
        return Scenario(str(d["name"]), edits, str(d.get("note", "")))

    @staticmethod
    def load(path: str | Path) -> "Scenario":
        path = Path(path)
        if not path.exists():
            raise MissingInput(str(path))
        return Scenario.from_dict(json.loads(path.read_text()))

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def edited_tracts(self) -> list[str]:
        seen: dict[str, None] = {}
        for e in self.edits:
            seen.setdefault(e.tract_id, None)
        return list(seen)


def apply_scenario(graph: TractGraph, scenario: Scenario,
                   schema: FeatureSchema) -> TractGraph:
    """Return a copy of ``graph`` with the scenario's indicator edits applied.

    Topology and distances are untouched; the input graph is never mutated.
    Edits apply in order, so a ``set`` followed by ``add`` accumulates.
    """
    if graph.n_features != len(schema):
        raise SchemaMismatch("graph features do not match schema")
    features = graph.feature_matrix.copy()
    for e in scenario.edits:
        if e.tract_id not in graph.index_of:
            raise UnknownTract(f"scenario edits unknown tract {e.tract_id!r}")
        try:
            col = schema.index_of(e.indicator)
        except KeyError:
            raise UnknownIndicator(
                f"scenario edits unknown indicator {e.indicator!r}") from None
        row = graph.index_of[e.tract_id]
        new_value = e.value if e.op == "set" else features[row, col] + e.value
        if schema.nonnegative[col] and new_value < 0:
            raise NegativeForbidden(
                f"edit drives {e.indicator!r} of tract {e.tract_id!r} to {new_value}")
        features[row, col] = new_value
    return graph.with_features(features)


@dataclass(frozen=True)
class PairDiff:
    origin: str
    dest: str
    baseline: float
    scenario: float
    relative_change: float  # (scenario - baseline) / baseline


@dataclass(frozen=True)
class UndefinedPairDiff:
    origin: str
    dest: str
    baseline: float  # 0 by construction
    scenario: float


@dataclass(frozen=True)
class FlowDiff:
    scenario_name: str
    pairs: tuple[PairDiff, ...]
    undefined: tuple[UndefinedPairDiff, ...]

    def defined_map(self) -> dict[tuple[str, str], float]:
        return {(p.origin, p.dest): p.relative_change for p in self.pairs}

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario_name,
            "pairs": [
                {"origin": p.origin, "destination": p.dest, "baseline": p.baseline,
                 "scenario": p.scenario, "relative_change": p.relative_change}
                for p in self.pairs
            ],
            "undefined_relative": [
                {"origin": p.origin, "destination": p.dest, "baseline": p.baseline,
                 "scenario": p.scenario}
                for p in self.undefined
            ],
        }

    @staticmethod
    def from_dict(d: Mapping, name: str) -> "FlowDiff":
        return FlowDiff(
            name,
            tuple(PairDiff(p["origin"], p["destination"], float(p["baseline"]),
                           float(p["scenario"]), float(p["relative_change"]))
                  for p in d["pairs"]),
            tuple(UndefinedPairDiff(p["origin"], p["destination"],
                                    float(p["baseline"]), float(p["scenario"]))
                  for p in d["undefined_relative"]),
        )

    def csv_lines(self) -> list[str]:
        lines = ["origin,destination,baseline,scenario,relative_change"]
        for p in self.pairs:
            lines.append(f"{p.origin},{p.dest},{p.baseline!r},{p.scenario!r},"
                         f"{p.relative_change!r}")
        for u in self.undefined:
            lines.append(f"{u.origin},{u.dest},{u.baseline!r},{u.scenario!r},")
        return lines


def scenario_pair_universe(model: TrainedModel, scenario: Scenario,
                           distance_cutoff_km: float = DEFAULT_DISTANCE_CUTOFF_KM
                           ) -> list[tuple[str, str]]:
    """Observed pairs plus every pair touching the edited tracts' receptive field.

    The receptive field is the encoder-depth hop neighborhood of the edited
    tracts; pairs with either endpoint inside it are included up to the
    distance cutoff. Output is sorted for stable downstream ordering.
    """
    graph = model.graph
    pairs = set(model.flows.pair_set())
    for t in scenario.edited_tracts():
        if t not in graph.index_of:
            raise UnknownTract(f"unknown tract {t!r}")
    seeds = [graph.index_of[t] for t in scenario.edited_tracts()]
    if seeds:
        field = sorted(graph.hop_neighborhood(seeds, model.gat_config.layers))
        dmat = model.dmat
        n = len(graph)
        ids = [t.id for t in graph.tracts]
        for i in field:
            near = np.nonzero(dmat[i] <= distance_cutoff_km)[0]
            for j in near:
                if i != j:
                    pairs.add((ids[i], ids[int(j)]))
                    pairs.add((ids[int(j)], ids[i]))
    return sorted(pairs)


def predict_scenario(model: TrainedModel, scenario: Scenario,
                     pairs: Optional[Sequence[tuple[str, str]]] = None,
                     distance_cutoff_km: float = DEFAULT_DISTANCE_CUTOFF_KM
                     ) -> FlowDiff:
    """Baseline vs scenario predictions over the pair universe.

    Deterministic: re-running with the same model and scenario reproduces the
    diff exactly, and an empty scenario yields all-zero changes.
    """
    apply_pairs = list(pairs) if pairs is not None else scenario_pair_universe(
        model, scenario, distance_cutoff_km)
    modified = apply_scenario(model.graph, scenario, model.schema)
    baseline = model.predict_pairs(apply_pairs)
    scenario_flows = model.predict_pairs(apply_pairs, graph=modified)

    defined: list[PairDiff] = []
    undefined: list[UndefinedPairDiff] = []
    for (o, d), b, s in zip(apply_pairs, baseline, scenario_flows):
        if b > 0:
            defined.append(PairDiff(o, d, float(b), float(s), float((s - b) / b)))
        else:
            undefined.append(UndefinedPairDiff(o, d, float(b), float(s)))
    return FlowDiff(scenario.name, tuple(defined), tuple(undefined))


def neighborhood_pairs(graph: TractGraph, modified: Iterable[str],
                       radius_km: float) -> set[tuple[str, str]]:
    """Ordered OD pairs whose two centroids both lie within ``radius_km`` of
    some modified tract's centroid (modified tracts count as within)."""
    if radius_km <= 0:
        raise NonFiniteValue(-1, "radius_km", str(radius_km))
    mod_idx = []
    for t in modified:
        if t not in graph.index_of:
            raise UnknownTract(f"unknown tract {t!r}")
        mod_idx.append(graph.index_of[t])
    if not mod_idx:
        return set()
    centers = [(graph.tracts[i].lat, graph.tracts[i].lon) for i in mod_idx]
    near: list[str] = []
    for t in graph.tracts:
        if any(great_circle_km(t.centroid, c) <= radius_km for c in centers):
            near.append(t.id)
    return {(a, b) for a in near for b in near if a != b}


@dataclass(frozen=True)
class DiffSummary:
    mean: float
    std: float  # population standard deviation
    bin_edges: tuple[float, ...]
    counts: tuple[int, ...]
    filter_desc: str
    n_defined: int
    n_undefined: int

    def to_dict(self) -> dict:
        return {
            "mean_relative_change": self.mean,
            "std_relative_change": self.std,
            "histogram": {"bin_edges": list(self.bin_edges),
                          "counts": list(self.counts)},
            "filter": self.filter_desc,
            "n_defined": self.n_defined,
            "n_undefined": self.n_undefined,
        }


def evaluate_scenario(model: TrainedModel, scenario: Scenario,
                      radius_km: Optional[float] = None,
                      bins: int = DEFAULT_HISTOGRAM_BINS,
                      distance_cutoff_km: float = DEFAULT_DISTANCE_CUTOFF_KM
                      ) -> dict:
    """Full scenario evaluation as one plain document.

    The command-line exporter and the HTTP facade both return this payload,
    so results are comparable field for field across interfaces.
    """
    diff = predict_scenario(model, scenario, distance_cutoff_km=distance_cutoff_km)
    if radius_km is not None:
        filter_pairs = neighborhood_pairs(model.graph, scenario.edited_tracts(),
                                          radius_km)
        desc = f"both centroids within {radius_km:g} km of an edited tract"
    else:
        filter_pairs = None
        desc = "all pairs"
    summary = summarize(diff, filter_pairs, bins=bins, filter_desc=desc)
    return {
        "scenario_id": scenario.content_hash(),
        "name": scenario.name,
        "radius_km": radius_km,
        "bins": bins,
        "diff": diff.to_dict(),
        "summary": summary.to_dict(),
    }


def summarize(diff: FlowDiff, filter_pairs: Optional[set[tuple[str, str]]] = None,
              bins: int = DEFAULT_HISTOGRAM_BINS,
              filter_desc: str = "") -> DiffSummary:
    """Population mean/std and an equal-width histogram of relative changes.

    ``filter_pairs`` (when given) restricts to those OD pairs; histogram
    counts always sum to the number of defined relative changes kept.
    """
    kept = [p for p in diff.pairs
            if filter_pairs is None or (p.origin, p.dest) in filter_pairs]
    if not kept:
        raise NoDefinedPairs("no defined relative changes under this filter")
    values = np.array([p.relative_change for p in kept])
    counts, edges = np.histogram(values, bins=bins)
    n_undef = sum(1 for u in diff.undefined
                  if filter_pairs is None or (u.origin, u.dest) in filter_pairs)
    return DiffSummary(
        mean=float(values.mean()),
        std=float(values.std()),
        bin_edges=tuple(float(e) for e in edges),
        counts=tuple(int(c) for c in counts),
        filter_desc=filter_desc or ("all pairs" if filter_pairs is None else "custom"),
        n_defined=len(kept),
        n_undefined=n_undef,
    )
