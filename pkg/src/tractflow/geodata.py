"""Tract/graph/flow data model and ingestion.

The geographic unit is a census tract: an opaque id, a centroid, and a vector
of urban indicators described by a :class:`FeatureSchema`. Tracts are wired
into an undirected weighted geo-adjacency network (:class:`TractGraph`) whose
edge weights are inter-centroid travel distances in km. Observed commuting
flows live in a :class:`FlowTable` with per-pair train/val/test labels.

All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import (
    DegenerateGeometry,
    DuplicateId,
    DuplicatePair,
    EmptyInput,
    MissingColumn,
    MissingInput,
    NonFiniteValue,
    SchemaMismatch,
    UnknownTract,
)

logger = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0088

SPLITS = ("train", "val", "test")

INDICATOR_CATEGORIES = ("infrastructure", "land use", "speciality")


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# Feature schema
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureSchema:
    """Ordered indicator layout plus (optional) training-time z-score stats.

    ``mean``/``std`` are captured once from the training tract table and
    travel with the model checkpoint so that scenario-time features are
    scaled identically. Constant columns (std == 0) are flagged and passed
    through unscaled.
    """

    names: tuple[str, ...]
    categories: tuple[str, ...]
    nonnegative: tuple[bool, ...]
    mean: Optional[np.ndarray] = None
    std: Optional[np.ndarray] = None
    constant: Optional[tuple[bool, ...]] = None

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            dupes = sorted({n for n in self.names if self.names.count(n) > 1})
            raise DuplicateId(f"duplicate indicator name(s): {', '.join(dupes)}")
        if len(self.categories) != len(self.names) or len(self.nonnegative) != len(self.names):
            raise SchemaMismatch("categories/nonnegative must align with names")
        for c in self.categories:
            if c not in INDICATOR_CATEGORIES:
                raise SchemaMismatch(f"unknown indicator category {c!r}")
        if self.mean is not None:
            if not (np.isfinite(self.mean).all() and np.isfinite(self.std).all()):
                raise SchemaMismatch("normalization stats must be finite")
            applied = ~np.asarray(self.constant, dtype=bool)
            if np.any(self.std[applied] <= 0):
                raise SchemaMismatch("std must be > 0 for scaled columns")

    def __len__(self) -> int:
        return len(self.names)

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(name) from None

    @staticmethod
    def from_names(names: Sequence[str], category: str = "infrastructure") -> "FeatureSchema":
        n = len(names)
        return FeatureSchema(tuple(names), (category,) * n, (True,) * n)

    def with_stats(self, features: np.ndarray) -> "FeatureSchema":
        """Return a copy carrying z-score stats computed from ``features`` (n x len)."""
        mean = features.mean(axis=0)
        std = features.std(axis=0)
        constant = tuple(bool(s == 0.0) for s in std)
        # constant columns keep std=1 so normalize() is a pure shift-free pass-through
        safe = np.where(std == 0.0, 1.0, std)
        safe_mean = np.where(std == 0.0, 0.0, mean)
        return FeatureSchema(self.names, self.categories, self.nonnegative,
                             _readonly(safe_mean), _readonly(safe), constant)

    def normalize(self, features: np.ndarray) -> np.ndarray:
        if self.mean is None:
            raise SchemaMismatch("schema carries no normalization stats; call with_stats first")
        if features.shape[-1] != len(self):
            raise SchemaMismatch(
                f"feature length {features.shape[-1]} != schema length {len(self)}")
        return (features - self.mean) / self.std

    def denormalize(self, features: np.ndarray) -> np.ndarray:
        if self.mean is None:
            raise SchemaMismatch("schema carries no normalization stats")
        return features * self.std + self.mean

    def to_dict(self) -> dict:
        d = {
            "indicators": [
                {"name": n, "category": c, "nonnegative": nn}
                for n, c, nn in zip(self.names, self.categories, self.nonnegative)
            ]
        }
        if self.mean is not None:
            d["normalization"] = {
                "mean": [float(x) for x in self.mean],
                "std": [float(x) for x in self.std],
                "constant": list(self.constant),
            }
        return d

    @staticmethod
    def from_dict(d: Mapping) -> "FeatureSchema":
        inds = d["indicators"]
        names = tuple(i["name"] for i in inds)
        cats = tuple(i.get("category", "infrastructure") for i in inds)
        nonneg = tuple(bool(i.get("nonnegative", True)) for i in inds)
        norm = d.get("normalization")
        if norm is None:
            return FeatureSchema(names, cats, nonneg)
        return FeatureSchema(
            names, cats, nonneg,
            _readonly(np.asarray(norm["mean"], dtype=float)),
            _readonly(np.asarray(norm["std"], dtype=float)),
            tuple(bool(x) for x in norm["constant"]),
        )


# ---------------------------------------------------------------------------
# Tracts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Tract:
    id: str
    lat: float
    lon: float
    features: np.ndarray  # (len(schema),), read-only

    @property
    def centroid(self) -> tuple[float, float]:
        return (self.lat, self.lon)


def great_circle_km(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Haversine distance in km between (lat, lon) points, R = 6371.0088 km."""
    lat1, lon1 = math.radians(a[0]), math.radians(a[1])
    lat2, lon2 = math.radians(b[0]), math.radians(b[1])
    s = (math.sin((lat2 - lat1) / 2) ** 2
         + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2)
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(s)))


def _haversine_matrix(lats: np.ndarray, lons: np.ndarray) -> np.ndarray:
    lat = np.radians(lats)[:, None]
    lon = np.radians(lons)[:, None]
    dlat = lat - lat.T
    dlon = lon - lon.T
    s = np.sin(dlat / 2) ** 2 + np.cos(lat) * np.cos(lat.T) * np.sin(dlon / 2) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(s)))


class GreatCircleDistance:
    """Default distance provider: haversine between tract centroids."""

    kind = "great_circle"

    def between(self, a: Tract, b: Tract) -> float:
        return great_circle_km(a.centroid, b.centroid)

    def pairwise(self, tracts: Sequence[Tract]) -> np.ndarray:
        lats = np.array([t.lat for t in tracts])
        lons = np.array([t.lon for t in tracts])
        return _haversine_matrix(lats, lons)

    def to_dict(self) -> dict:
        return {"kind": self.kind}


class MatrixDistance:
    """Distance provider backed by a precomputed id-pair table (e.g. routed km).

    Missing pairs are an error rather than silently falling back; routing
    tables are expected to be complete for the tract set they serve.
    """

    kind = "matrix"

    def __init__(self, table: Mapping[tuple[str, str], float]):
        self._table = {}
        for (a, b), d in table.items():
            if not (np.isfinite(d) and d >= 0):
                raise NonFiniteValue(-1, f"{a}->{b}", f"distance {d!r}")
            self._table[(a, b)] = float(d)
            self._table.setdefault((b, a), float(d))

    @staticmethod
    def from_csv(path: str | Path) -> "MatrixDistance":
        path = Path(path)
        if not path.exists():
            raise MissingInput(str(path))
        table = {}
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            need = {"origin_id", "dest_id", "distance_km"}
            if reader.fieldnames is None or not need.issubset(reader.fieldnames):
                raise MissingColumn(sorted(need - set(reader.fieldnames or [])))
            for i, row in enumerate(reader):
                try:
                    d = float(row["distance_km"])
                except ValueError:
                    raise NonFiniteValue(i, "distance_km", row["distance_km"]) from None
                table[(row["origin_id"], row["dest_id"])] = d
        return MatrixDistance(table)

    def between(self, a: Tract, b: Tract) -> float:
        try:
            return self._table[(a.id, b.id)]
        except KeyError:
            raise UnknownTract(f"no distance entry for pair ({a.id}, {b.id})") from None

    def pairwise(self, tracts: Sequence[Tract]) -> np.ndarray:
        n = len(tracts)
        out = np.zeros((n, n))
        for i, a in enumerate(tracts):
            for j, b in enumerate(tracts):
                if i != j:
                    out[i, j] = self.between(a, b)
        return out

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "entries": [[a, b, d] for (a, b), d in sorted(self._table.items())],
        }


def distance_provider_from_dict(d: Mapping):
    if d["kind"] == "great_circle":
        return GreatCircleDistance()
    if d["kind"] == "matrix":
        return MatrixDistance({(a, b): v for a, b, v in d["entries"]})
    raise SchemaMismatch(f"unknown distance provider kind {d['kind']!r}")


# ---------------------------------------------------------------------------
# Adjacency policies and the graph
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KNearest:
    k: int = 8

    def describe(self) -> str:
        return f"knn:{self.k}"


@dataclass(frozen=True)
class Radius:
    km: float

    def describe(self) -> str:
        return f"radius:{self.km:g}km"


@dataclass(frozen=True)
class Edge:
    a: int
    b: int
    distance_km: float
    duration_min: Optional[float] = None  # housed, not consumed


class TractGraph:
    """Undirected weighted geo-adjacency network over census tracts.

    Guarantees after construction: no self-loops, strictly positive finite
    edge weights, symmetric adjacency, and a single connected component.
    Per-node neighbor lists are ordered by neighbor tract id so downstream
    aggregation arithmetic is independent of tract ordering.
    """

    def __init__(self, tracts: Sequence[Tract], edges: Iterable[Edge], policy_desc: str):
        self.tracts: tuple[Tract, ...] = tuple(tracts)
        self.policy = policy_desc
        self.index_of = {t.id: i for i, t in enumerate(self.tracts)}
        if len(self.index_of) != len(self.tracts):
            raise DuplicateId("duplicate tract id in graph")

        seen: dict[tuple[int, int], Edge] = {}
        for e in edges:
            if e.a == e.b:
                raise DegenerateGeometry(f"self-loop on tract {self.tracts[e.a].id}")
            if not (np.isfinite(e.distance_km) and e.distance_km > 0):
                raise DegenerateGeometry(
                    f"non-positive distance between {self.tracts[e.a].id} "
                    f"and {self.tracts[e.b].id}")
            key = (min(e.a, e.b), max(e.a, e.b))
            prev = seen.get(key)
            if prev is not None and prev.distance_km != e.distance_km:
                raise DegenerateGeometry(f"conflicting weights for edge {key}")
            seen[key] = Edge(key[0], key[1], e.distance_km, e.duration_min)
        self.edges: tuple[Edge, ...] = tuple(seen[k] for k in sorted(seen))

        nbrs: list[list[tuple[int, float]]] = [[] for _ in self.tracts]
        for e in self.edges:
            nbrs[e.a].append((e.b, e.distance_km))
            nbrs[e.b].append((e.a, e.distance_km))
        for i, lst in enumerate(nbrs):
            lst.sort(key=lambda jd: self.tracts[jd[0]].id)
        self._neighbors = tuple(tuple(lst) for lst in nbrs)

        self._features = _readonly(np.array([t.features for t in self.tracts], dtype=float))
        self._lats = _readonly(np.array([t.lat for t in self.tracts]))
        self._lons = _readonly(np.array([t.lon for t in self.tracts]))

        if len(self.tracts) > 1 and not self._connected():
            raise DegenerateGeometry("graph is not connected")

    def __len__(self) -> int:
        return len(self.tracts)

    @property
    def n_features(self) -> int:
        return self._features.shape[1]

    @property
    def feature_matrix(self) -> np.ndarray:
        return self._features

    @property
    def lats(self) -> np.ndarray:
        return self._lats

    @property
    def lons(self) -> np.ndarray:
        return self._lons

    def neighbors(self, i: int) -> tuple[tuple[int, float], ...]:
        """Neighbors of node i as (index, distance_km), sorted by neighbor id."""
        return self._neighbors[i]

    def edge_weight(self, a: int, b: int) -> Optional[float]:
        for j, d in self._neighbors[a]:
            if j == b:
                return d
        return None

    def _connected(self) -> bool:
        return len(self.bfs_reach(0)) == len(self.tracts)

    def bfs_reach(self, start: int, max_hops: Optional[int] = None) -> dict[int, int]:
        """BFS hop counts from ``start``; optionally truncated at ``max_hops``."""
        dist = {start: 0}
        frontier = [start]
        hops = 0
        while frontier and (max_hops is None or hops < max_hops):
            hops += 1
            nxt = []
            for u in frontier:
                for v, _ in self._neighbors[u]:
                    if v not in dist:
                        dist[v] = hops
                        nxt.append(v)
            frontier = nxt
        return dist

    def hop_neighborhood(self, seeds: Iterable[int], max_hops: int) -> set[int]:
        out: set[int] = set()
        for s in seeds:
            out.update(self.bfs_reach(s, max_hops))
        return out

    def with_features(self, features: np.ndarray) -> "TractGraph":
        """Copy of this graph with replaced indicator values (same topology)."""
        if features.shape != self._features.shape:
            raise SchemaMismatch("replacement features have wrong shape")
        tracts = tuple(
            Tract(t.id, t.lat, t.lon, _readonly(features[i].copy()))
            for i, t in enumerate(self.tracts)
        )
        return TractGraph(tracts, self.edges, self.policy)

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "tracts": [
                {"id": t.id, "lat": t.lat, "lon": t.lon,
                 "features": [float(x) for x in t.features]}
                for t in self.tracts
            ],
            "edges": [
                [e.a, e.b, e.distance_km] + ([e.duration_min] if e.duration_min is not None else [])
                for e in self.edges
            ],
        }

    @staticmethod
    def from_dict(d: Mapping) -> "TractGraph":
        tracts = [
            Tract(t["id"], float(t["lat"]), float(t["lon"]),
                  _readonly(np.asarray(t["features"], dtype=float)))
            for t in d["tracts"]
        ]
        edges = [Edge(int(e[0]), int(e[1]), float(e[2]),
                      float(e[3]) if len(e) > 3 else None) for e in d["edges"]]
        return TractGraph(tracts, edges, d["policy"])


def build_graph(tracts: Sequence[Tract],
                policy: KNearest | Radius = KNearest(),
                distance: Optional[object] = None) -> TractGraph:
    """Build the geo-adjacency network under a k-nearest or radius policy.

    Directed k-nearest selections are symmetrized into undirected edges.
    Isolated tracts (possible under a radius policy) are attached to their
    single nearest neighbor, and any remaining components are bridged through
    their closest cross-component tract pair so the result is connected.
    """
    if len(tracts) < 2:
        raise EmptyInput("need at least 2 tracts to build a graph")
    provider = distance or GreatCircleDistance()
    dmat = provider.pairwise(tracts)
    n = len(tracts)

    off_diag = dmat + np.diag(np.full(n, np.inf))
    zero_at = np.argwhere(off_diag == 0.0)
    if len(zero_at):
        i, j = zero_at[0]
        raise DegenerateGeometry(
            f"tracts {tracts[i].id} and {tracts[j].id} share a centroid")

    pairs: set[tuple[int, int]] = set()
    if isinstance(policy, KNearest):
        if policy.k < 1:
            raise EmptyInput("k must be >= 1")
        k = min(policy.k, n - 1)
        for i in range(n):
            order = np.argsort(off_diag[i], kind="stable")
            for j in order[:k]:
                pairs.add((min(i, int(j)), max(i, int(j))))
    elif isinstance(policy, Radius):
        if policy.km <= 0:
            raise EmptyInput("radius must be > 0")
        ii, jj = np.nonzero(off_diag <= policy.km)
        for i, j in zip(ii, jj):
            if i < j:
                pairs.add((int(i), int(j)))
        # attach isolated tracts to their single nearest neighbor
        degree = np.zeros(n, dtype=int)
        for a, b in pairs:
            degree[a] += 1
            degree[b] += 1
        for i in np.nonzero(degree == 0)[0]:
            j = int(np.argmin(off_diag[i]))
            pairs.add((min(int(i), j), max(int(i), j)))
    else:
        raise TypeError(f"unknown adjacency policy {policy!r}")

    pairs = _bridge_components(pairs, off_diag, n)
    edges = [Edge(a, b, float(dmat[a, b])) for a, b in sorted(pairs)]
    return TractGraph(tracts, edges, policy.describe())


def _bridge_components(pairs: set[tuple[int, int]], off_diag: np.ndarray, n: int):
    """Join disconnected components via their closest cross-component pair."""
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in pairs:
        parent[find(a)] = find(b)
    while True:
        roots = {find(i) for i in range(n)}
        if len(roots) == 1:
            break
        comp0 = [i for i in range(n) if find(i) == find(0)]
        rest = [i for i in range(n) if find(i) != find(0)]
        sub = off_diag[np.ix_(comp0, rest)]
        flat = int(np.argmin(sub))
        i = comp0[flat // len(rest)]
        j = rest[flat % len(rest)]
        pairs.add((min(i, j), max(i, j)))
        parent[find(i)] = find(j)
    return pairs


# ---------------------------------------------------------------------------
# Flows
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FlowRecord:
    origin: str
    dest: str
    commuters: int
    split: str = "train"


@dataclass(frozen=True)
class FlowTable:
    records: tuple[FlowRecord, ...]

    def __post_init__(self):
        seen = set()
        for r in self.records:
            if (r.origin, r.dest) in seen:
                raise DuplicatePair(f"duplicate pair ({r.origin}, {r.dest})")
            seen.add((r.origin, r.dest))
            if r.split not in SPLITS:
                raise NonFiniteValue(-1, "split", r.split)
            if r.commuters < 0:
                raise NonFiniteValue(-1, "commuters", str(r.commuters))

    def __len__(self) -> int:
        return len(self.records)

    def by_split(self, split: str) -> tuple[FlowRecord, ...]:
        if split not in SPLITS:
            raise NonFiniteValue(-1, "split", split)
        return tuple(r for r in self.records if r.split == split)

    def pair_set(self) -> set[tuple[str, str]]:
        return {(r.origin, r.dest) for r in self.records}

    def validate_ids(self, graph: TractGraph) -> None:
        for r in self.records:
            if r.origin not in graph.index_of:
                raise UnknownTract(f"flow origin {r.origin!r} not in graph")
            if r.dest not in graph.index_of:
                raise UnknownTract(f"flow destination {r.dest!r} not in graph")

    def split_counts(self) -> dict[str, int]:
        counts = {s: 0 for s in SPLITS}
        for r in self.records:
            counts[r.split] += 1
        return counts

    def to_list(self) -> list:
        return [[r.origin, r.dest, r.commuters, r.split] for r in self.records]

    @staticmethod
    def from_list(rows: Iterable) -> "FlowTable":
        return FlowTable(tuple(FlowRecord(o, d, int(c), s) for o, d, c, s in rows))


def split_flows(records: Sequence[FlowRecord],
                ratios: tuple[float, float, float] = (0.6, 0.2, 0.2),
                seed: int = 0) -> FlowTable:
    """Assign each OD pair to train/val/test, deterministically for a seed.

    Class sizes follow the largest-remainder rounding of ``ratios``; a pair is
    never divided across classes. Records must already be unique per pair.
    """
    if not records:
        raise EmptyInput("no flow records to split")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise NonFiniteValue(-1, "ratios", f"sum {sum(ratios)} != 1")
    keys = [(r.origin, r.dest) for r in records]
    if len(set(keys)) != len(keys):
        raise DuplicatePair("duplicate OD pair in raw records")

    n = len(records)
    base = [math.floor(r * n) for r in ratios]
    rem = n - sum(base)
    frac = [(r * n) - math.floor(r * n) for r in ratios]
    for idx in sorted(range(3), key=lambda i: (-frac[i], i))[:rem]:
        base[idx] += 1

    order = np.random.default_rng(seed).permutation(n)
    labels = [""] * n
    cursor = 0
    for count, split in zip(base, SPLITS):
        for pos in order[cursor:cursor + count]:
            labels[int(pos)] = split
        cursor += count
    return FlowTable(tuple(
        FlowRecord(r.origin, r.dest, r.commuters, labels[i])
        for i, r in enumerate(records)
    ))


# ---------------------------------------------------------------------------
# File ingestion
# ---------------------------------------------------------------------------

RESERVED_TRACT_COLUMNS = ("id", "lat", "lon")


def load_tracts(path: str | Path, schema: Optional[FeatureSchema] = None
                ) -> tuple[list[Tract], FeatureSchema]:
    """Load tracts from a delimited table or a GeoJSON FeatureCollection.

    Tables need ``id``, ``lat``, ``lon`` plus one column per indicator;
    GeoJSON features need an ``id`` and indicator properties, with the
    centroid taken from the geometry (as given for points, area-weighted for
    polygons). Without an explicit schema, every non-reserved column becomes
    an indicator in file order. Rows with missing, unparseable, non-finite,
    or out-of-range values are rejected with their row index.
    """
    path = Path(path)
    if not path.exists():
        raise MissingInput(str(path))
    text = path.read_text()
    if path.suffix.lower() in (".geojson", ".json") or text.lstrip().startswith("{"):
        return _tracts_from_geojson(text, schema)
    return _tracts_from_table(text, schema)


def _check_coord(row_idx: int, lat: float, lon: float) -> None:
    if not (np.isfinite(lat) and -90.0 <= lat <= 90.0):
        raise NonFiniteValue(row_idx, "lat", f"{lat!r} outside [-90, 90]")
    if not (np.isfinite(lon) and -180.0 <= lon <= 180.0):
        raise NonFiniteValue(row_idx, "lon", f"{lon!r} outside [-180, 180]")


def _build_tract(row_idx: int, tid: str, lat: float, lon: float,
                 values: dict[str, object], schema: FeatureSchema) -> Tract:
    _check_coord(row_idx, lat, lon)
    feats = np.empty(len(schema))
    for k, name in enumerate(schema.names):
        raw = values.get(name)
        if raw is None or raw == "":
            raise NonFiniteValue(row_idx, name, "missing value")
        try:
            v = float(raw)
        except (TypeError, ValueError):
            raise NonFiniteValue(row_idx, name, repr(raw)) from None
        if not np.isfinite(v):
            raise NonFiniteValue(row_idx, name, repr(raw))
        if schema.nonnegative[k] and v < 0:
            raise NonFiniteValue(row_idx, name, f"{v} < 0")
        feats[k] = v
    return Tract(tid, lat, lon, _readonly(feats))


def _tracts_from_table(text: str, schema: Optional[FeatureSchema]):
    delimiter = "\t" if "\t" in text.splitlines()[0] else ","
    reader = csv.DictReader(text.splitlines(), delimiter=delimiter)
    header = reader.fieldnames or []
    missing = [c for c in RESERVED_TRACT_COLUMNS if c not in header]
    if missing:
        raise MissingColumn(missing)
    if schema is None:
        schema = FeatureSchema.from_names(
            [c for c in header if c not in RESERVED_TRACT_COLUMNS])
    else:
        absent = [n for n in schema.names if n not in header]
        if absent:
            raise MissingColumn(absent)

    tracts, seen = [], set()
    for i, row in enumerate(reader):
        tid = (row.get("id") or "").strip()
        if not tid:
            raise NonFiniteValue(i, "id", "empty id")
        if tid in seen:
            raise DuplicateId(f"duplicate tract id {tid!r} at row {i}")
        seen.add(tid)
        try:
            lat, lon = float(row["lat"]), float(row["lon"])
        except (TypeError, ValueError):
            raise NonFiniteValue(i, "lat/lon", f"{row.get('lat')!r}, {row.get('lon')!r}") from None
        tracts.append(_build_tract(i, tid, lat, lon, row, schema))
    return tracts, schema


def _polygon_centroid(rings: list) -> tuple[float, float]:
    """Area-weighted centroid of a polygon's outer ring, (lat, lon)."""
    ring = rings[0]
    area2 = 0.0
    cx = cy = 0.0
    for (x1, y1), (x2, y2) in zip(ring, ring[1:] + ring[:1]):
        cross = x1 * y2 - x2 * y1
        area2 += cross
        cx += (x1 + x2) * cross
        cy += (y1 + y2) * cross
    if area2 == 0.0:  # degenerate ring; fall back to vertex mean
        xs = [p[0] for p in ring]
        ys = [p[1] for p in ring]
        return (sum(ys) / len(ys), sum(xs) / len(xs))
    return (cy / (3.0 * area2), cx / (3.0 * area2))


def _geometry_centroid(geom: Mapping) -> tuple[float, float]:
    gtype = geom["type"]
    if gtype == "Point":
        lon, lat = geom["coordinates"][:2]
        return (float(lat), float(lon))
    if gtype == "Polygon":
        return _polygon_centroid(geom["coordinates"])
    if gtype == "MultiPolygon":
        best = max(geom["coordinates"], key=lambda rings: _ring_area(rings[0]))
        return _polygon_centroid(best)
    raise NonFiniteValue(-1, "geometry", f"unsupported type {gtype!r}")


def _ring_area(ring: list) -> float:
    area2 = 0.0
    for (x1, y1), (x2, y2) in zip(ring, ring[1:] + ring[:1]):
        area2 += x1 * y2 - x2 * y1
    return abs(area2) / 2.0


def _tracts_from_geojson(text: str, schema: Optional[FeatureSchema]):
    doc = json.loads(text)
    features = doc.get("features")
    if features is None:
        raise MissingColumn(["features"])
    if schema is None:
        if not features:
            raise EmptyInput("empty FeatureCollection")
        props = features[0].get("properties", {})
        schema = FeatureSchema.from_names([k for k in props if k != "id"])

    tracts, seen = [], set()
    for i, feat in enumerate(features):
        props = feat.get("properties", {})
        tid = str(feat.get("id", props.get("id", "")) or "").strip()
        if not tid:
            raise NonFiniteValue(i, "id", "feature without id")
        if tid in seen:
            raise DuplicateId(f"duplicate tract id {tid!r} at feature {i}")
        seen.add(tid)
        if "geometry" not in feat or feat["geometry"] is None:
            raise NonFiniteValue(i, "geometry", "missing geometry")
        lat, lon = _geometry_centroid(feat["geometry"])
        tracts.append(_build_tract(i, tid, lat, lon, props, schema))
    return tracts, schema


def load_flows(path: str | Path) -> list[FlowRecord]:
    """Load raw OD records from a 3-column table (origin_id, dest_id, commuters).

    Duplicate pairs are aggregated by summing; self-pairs (origin == dest) are
    dropped because downstream predictors require a positive travel distance.
    """
    path = Path(path)
    if not path.exists():
        raise MissingInput(str(path))
    text = path.read_text()
    delimiter = "\t" if "\t" in text.splitlines()[0] else ","
    reader = csv.DictReader(text.splitlines(), delimiter=delimiter)
    need = ["origin_id", "dest_id", "commuters"]
    header = reader.fieldnames or []
    missing = [c for c in need if c not in header]
    if missing:
        raise MissingColumn(missing)

    agg: dict[tuple[str, str], int] = {}
    dropped_self = 0
    for i, row in enumerate(reader):
        o, d = (row["origin_id"] or "").strip(), (row["dest_id"] or "").strip()
        if not o or not d:
            raise NonFiniteValue(i, "origin_id/dest_id", "empty id")
        try:
            c = float(row["commuters"])
        except (TypeError, ValueError):
            raise NonFiniteValue(i, "commuters", repr(row["commuters"])) from None
        if not np.isfinite(c) or c < 0 or c != int(c):
            raise NonFiniteValue(i, "commuters", repr(row["commuters"]))
        if o == d:
            dropped_self += 1
            continue
        agg[(o, d)] = agg.get((o, d), 0) + int(c)
    if dropped_self:
        logger.warning("dropped %d self-pair flow record(s)", dropped_self)
    if not agg:
        raise EmptyInput("no usable flow records")
    return [FlowRecord(o, d, c) for (o, d), c in agg.items()]
