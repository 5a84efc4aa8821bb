import json
import math

import numpy as np
import pytest

from tractflow.encoder import GatConfig
from tractflow.errors import (MissingInput, NegativeForbidden, NoDefinedPairs,
                              NonFiniteValue, UnknownIndicator, UnknownTract)
from tractflow.gbrt import BoostConfig
from tractflow.geodata import (EARTH_RADIUS_KM, FeatureSchema, FlowRecord,
                               FlowTable, KNearest, Tract, build_graph,
                               split_flows)
from tractflow.model import train_model
from tractflow.scenario import (FlowDiff, PairDiff, Scenario, ScenarioEdit,
                                UndefinedPairDiff, apply_scenario,
                                evaluate_scenario, neighborhood_pairs,
                                predict_scenario, scenario_pair_universe,
                                summarize)
from tractflow.training import TrainConfig

KM_PER_DEG = EARTH_RADIUS_KM * math.pi / 180.0


def _tract(tid, lat, lon, feats):
    arr = np.asarray(feats, dtype=float)
    arr.setflags(write=False)
    return Tract(tid, lat, lon, arr)


def _collinear_graph(n, spacing_km=1.0, features=None, k=1):
    deg = spacing_km / KM_PER_DEG
    rng = np.random.default_rng(17)
    tracts = []
    for i in range(n):
        f = features[i] if features is not None else [
            float(rng.lognormal(2.5, 0.5)), float(rng.uniform(0, 5))]
        tracts.append(_tract(f"t{i:02d}", 0.0, i * deg, f))
    return build_graph(tracts, KNearest(k))


def _schema2():
    return FeatureSchema(("mass", "bike_lane_km"),
                         ("land use", "infrastructure"), (True, True))


@pytest.fixture(scope="module")
def path_model():
    """Tiny model on a 12-tract path graph; used for exact locality checks."""
    graph = _collinear_graph(12)
    schema = _schema2()
    rng = np.random.default_rng(5)
    records = []
    for i, a in enumerate(graph.tracts):
        for j, b in enumerate(graph.tracts):
            if i == j or abs(i - j) > 4:
                continue
            d = abs(i - j) * 1.0
            count = round(0.05 * a.features[0] * b.features[0] / d ** 2
                          + rng.poisson(1.0))
            if count >= 1:
                records.append(FlowRecord(a.id, b.id, int(count)))
    flows = split_flows(records, seed=0)
    return train_model(
        graph, flows, schema,
        GatConfig(layers=2, hidden_dim=6, embedding_dim=6),
        TrainConfig(epochs=4, batch_size=128, lr=0.005, optimizer="adam",
                    log_targets=True, seed=0),
        BoostConfig(rounds=40))


# ---------------------------------------------------------------------------
# Scenario document
# ---------------------------------------------------------------------------

def test_edit_validation():
    with pytest.raises(NonFiniteValue):
        ScenarioEdit("t0", "mass", "multiply", 2.0)
    with pytest.raises(NonFiniteValue):
        ScenarioEdit("t0", "mass", "set", float("nan"))


def test_scenario_roundtrip_and_hash_stability(tmp_path):
    sc = Scenario("bike lanes", (ScenarioEdit("t1", "bike_lane_km", "add", 6.0),
                                 ScenarioEdit("t2", "mass", "set", 10.0)),
                  note="case study")
    clone = Scenario.from_dict(sc.to_dict())
    assert clone == sc
    assert clone.content_hash() == sc.content_hash()
    assert len(sc.content_hash()) == 16

    p = tmp_path / "sc.json"
    p.write_text(json.dumps(sc.to_dict()))
    assert Scenario.load(p) == sc
    with pytest.raises(MissingInput):
        Scenario.load(tmp_path / "absent.json")


def test_content_hash_distinguishes_edits():
    a = Scenario("s", (ScenarioEdit("t1", "mass", "set", 2.0),))
    b = Scenario("s", (ScenarioEdit("t1", "mass", "set", 2.5),))
    assert a.content_hash() != b.content_hash()


def test_edited_tracts_order_preserving_dedupe():
    sc = Scenario("s", (ScenarioEdit("t3", "mass", "add", 1.0),
                        ScenarioEdit("t1", "mass", "add", 1.0),
                        ScenarioEdit("t3", "bike_lane_km", "set", 2.0)))
    assert sc.edited_tracts() == ["t3", "t1"]


# ---------------------------------------------------------------------------
# apply_scenario
# ---------------------------------------------------------------------------

def test_empty_scenario_leaves_graph_identical():
    graph = _collinear_graph(4)
    out = apply_scenario(graph, Scenario("noop", ()), _schema2())
    assert np.array_equal(out.feature_matrix, graph.feature_matrix)
    assert [t.id for t in out.tracts] == [t.id for t in graph.tracts]


def test_four_tract_edit_changes_exactly_those_entries():
    graph = _collinear_graph(8)
    targets = ["t01", "t03", "t04", "t06"]
    sc = Scenario("lanes", tuple(
        ScenarioEdit(t, "bike_lane_km", "add", 6.0) for t in targets))
    before = graph.feature_matrix.copy()
    out = apply_scenario(graph, sc, _schema2())
    after = out.feature_matrix
    col = 1  # bike_lane_km
    for i, t in enumerate(graph.tracts):
        for j in range(after.shape[1]):
            if t.id in targets and j == col:
                assert after[i, j] == before[i, j] + 6.0
            else:
                assert after[i, j] == before[i, j]
    # purity: the base graph is untouched, bit for bit
    assert np.array_equal(graph.feature_matrix, before)


def test_apply_preserves_topology_and_distances():
    graph = _collinear_graph(5)
    sc = Scenario("s", (ScenarioEdit("t02", "mass", "set", 99.0),))
    out = apply_scenario(graph, sc, _schema2())
    assert out.edges == graph.edges
    assert out.policy == graph.policy


def test_set_then_add_accumulates_in_order():
    graph = _collinear_graph(3)
    sc = Scenario("s", (ScenarioEdit("t01", "mass", "set", 10.0),
                        ScenarioEdit("t01", "mass", "add", 2.5)))
    out = apply_scenario(graph, sc, _schema2())
    assert out.feature_matrix[1, 0] == 12.5


def test_apply_error_cases():
    graph = _collinear_graph(3)
    schema = _schema2()
    with pytest.raises(UnknownTract):
        apply_scenario(graph, Scenario("s", (
            ScenarioEdit("nope", "mass", "set", 1.0),)), schema)
    with pytest.raises(UnknownIndicator):
        apply_scenario(graph, Scenario("s", (
            ScenarioEdit("t00", "altitude", "set", 1.0),)), schema)
    with pytest.raises(NegativeForbidden):
        apply_scenario(graph, Scenario("s", (
            ScenarioEdit("t00", "mass", "set", -1.0),)), schema)


# ---------------------------------------------------------------------------
# predict_scenario
# ---------------------------------------------------------------------------

def test_empty_scenario_diff_is_exactly_zero(path_model):
    diff = predict_scenario(path_model, Scenario("noop", ()))
    assert len(diff.pairs) > 0
    for p in diff.pairs:
        assert p.scenario == p.baseline
        assert p.relative_change == 0.0
    for u in diff.undefined:
        assert u.scenario == u.baseline


def test_locality_bound_is_exact_on_path(path_model):
    model = path_model
    edited = "t00"
    sc = Scenario("local", (ScenarioEdit(edited, "mass", "set", 500.0),))
    pairs = scenario_pair_universe(model, sc)
    diff = predict_scenario(model, sc, pairs=pairs)
    hops = model.gat_config.layers
    reach = {f"t{i:02d}" for i in range(hops + 1)}
    changed = [(p.origin, p.dest) for p in diff.pairs if p.relative_change != 0.0]
    changed += [(u.origin, u.dest) for u in diff.undefined
                if u.scenario != u.baseline]
    assert changed, "the edit must move at least one pair"
    for o, d in changed:
        assert o in reach or d in reach, (o, d)


def test_pair_universe_covers_observed_and_neighborhood(path_model):
    model = path_model
    sc = Scenario("s", (ScenarioEdit("t05", "mass", "add", 1.0),))
    pairs = scenario_pair_universe(model, sc)
    assert pairs == sorted(set(pairs))
    observed = set(model.flows.pair_set())
    assert observed <= set(pairs)
    # the edited tract's own pairs within the cutoff are always present
    assert ("t05", "t06") in set(pairs)
    assert ("t04", "t05") in set(pairs)


def test_explicit_pair_list_is_respected(path_model):
    sc = Scenario("s", (ScenarioEdit("t02", "mass", "add", 5.0),))
    subset = [("t00", "t01"), ("t01", "t02")]
    diff = predict_scenario(path_model, sc, pairs=subset)
    got = [(p.origin, p.dest) for p in diff.pairs]
    got += [(u.origin, u.dest) for u in diff.undefined]
    assert got == subset


# ---------------------------------------------------------------------------
# neighborhood_pairs
# ---------------------------------------------------------------------------

def test_tiny_radius_keeps_only_modified_pairs():
    graph = _collinear_graph(5, spacing_km=2.0)
    got = neighborhood_pairs(graph, ["t00", "t03"], radius_km=0.5)
    assert got == {("t00", "t03"), ("t03", "t00")}


def test_middle_modified_one_km_radius_covers_all_six():
    graph = _collinear_graph(3, spacing_km=1.0)
    got = neighborhood_pairs(graph, ["t01"], radius_km=1.0)
    ids = ["t00", "t01", "t02"]
    assert got == {(a, b) for a in ids for b in ids if a != b}
    assert len(got) == 6


def test_neighborhood_matches_brute_force():
    rng = np.random.default_rng(15)
    deg = 1.0 / KM_PER_DEG
    tracts = [_tract(f"t{i:02d}", float(rng.uniform(0, 4)) * deg,
                     float(rng.uniform(0, 4)) * deg, [1.0, 1.0])
              for i in range(20)]
    graph = build_graph(tracts, KNearest(3))
    from tractflow.geodata import great_circle_km
    modified = ["t04", "t11"]
    radius = 2.0
    centers = [t.centroid for t in tracts if t.id in modified]
    near = [t.id for t in tracts
            if any(great_circle_km(t.centroid, c) <= radius for c in centers)]
    expected = {(a, b) for a in near for b in near if a != b}
    assert neighborhood_pairs(graph, modified, radius) == expected


def test_neighborhood_input_validation():
    graph = _collinear_graph(3)
    with pytest.raises(NonFiniteValue):
        neighborhood_pairs(graph, ["t00"], radius_km=0.0)
    with pytest.raises(UnknownTract):
        neighborhood_pairs(graph, ["zz"], radius_km=1.0)
    assert neighborhood_pairs(graph, [], radius_km=1.0) == set()


# ---------------------------------------------------------------------------
# summarize
# ---------------------------------------------------------------------------

def _diff_from_changes(changes, undefined=()):
    pairs = tuple(PairDiff(f"o{i}", f"d{i}", 10.0, 10.0 * (1 + c), c)
                  for i, c in enumerate(changes))
    undef = tuple(UndefinedPairDiff(f"u{i}", f"v{i}", 0.0, s)
                  for i, s in enumerate(undefined))
    return FlowDiff("fixture", pairs, undef)


def test_constant_changes_mean_only():
    s = summarize(_diff_from_changes([0.13, 0.13, 0.13]))
    assert s.mean == 0.13
    assert s.std == 0.0
    assert sum(s.counts) == 3


def test_two_changes_hand_mean_std():
    s = summarize(_diff_from_changes([0.1, 0.3]))
    assert s.mean == pytest.approx(0.2, abs=1e-15)
    assert s.std == pytest.approx(0.1, abs=1e-12)  # population std


def test_single_pair_one_occupied_bin():
    s = summarize(_diff_from_changes([0.42]), bins=10)
    assert s.std == 0.0
    assert sum(s.counts) == 1
    assert sum(1 for c in s.counts if c > 0) == 1


def test_counts_conserve_defined_pairs_under_filter():
    changes = list(np.random.default_rng(3).normal(0.1, 0.2, size=37))
    diff = _diff_from_changes(changes, undefined=[1.0, 2.0])
    keep = {(f"o{i}", f"d{i}") for i in range(0, 37, 2)}
    s = summarize(diff, filter_pairs=keep, bins=7)
    assert sum(s.counts) == s.n_defined == len(keep)
    vals = [c for i, c in enumerate(changes) if i % 2 == 0]
    assert s.mean == pytest.approx(np.mean(vals), abs=1e-15)
    assert s.std == pytest.approx(np.std(vals), abs=1e-15)
    assert s.n_undefined == 0  # undefined pairs are outside the filter


def test_no_defined_pairs_raises():
    with pytest.raises(NoDefinedPairs):
        summarize(_diff_from_changes([], undefined=[3.0]))
    with pytest.raises(NoDefinedPairs):
        summarize(_diff_from_changes([0.1]), filter_pairs={("x", "y")})


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def test_flow_diff_roundtrip_and_csv():
    diff = _diff_from_changes([0.25, -0.5], undefined=[1.5])
    clone = FlowDiff.from_dict(diff.to_dict(), "fixture")
    assert clone == diff
    lines = diff.csv_lines()
    assert lines[0] == "origin,destination,baseline,scenario,relative_change"
    assert lines[1].split(",")[4] == repr(0.25)
    assert lines[-1].endswith(",")  # undefined rows leave the ratio blank
    assert len(lines) == 1 + 2 + 1


def test_evaluate_scenario_payload_is_consistent(path_model):
    sc = Scenario("paint the path", (
        ScenarioEdit("t04", "bike_lane_km", "add", 6.0),
        ScenarioEdit("t05", "bike_lane_km", "add", 6.0)))
    payload = evaluate_scenario(path_model, sc, radius_km=2.0, bins=12)
    assert payload["scenario_id"] == sc.content_hash()
    assert payload["name"] == sc.name
    assert payload["radius_km"] == 2.0
    assert payload["bins"] == 12
    summary = payload["summary"]
    assert summary["filter"] == "both centroids within 2 km of an edited tract"
    assert sum(summary["histogram"]["counts"]) == summary["n_defined"]
    # histogram equals a direct recomputation from the shipped diff
    kept_pairs = neighborhood_pairs(path_model.graph, sc.edited_tracts(), 2.0)
    vals = [p["relative_change"] for p in payload["diff"]["pairs"]
            if (p["origin"], p["destination"]) in kept_pairs]
    counts, edges = np.histogram(vals, bins=12)
    assert summary["histogram"]["counts"] == counts.tolist()
    assert summary["histogram"]["bin_edges"] == [float(e) for e in edges]
    assert summary["mean_relative_change"] == pytest.approx(np.mean(vals), abs=1e-15)
    assert summary["std_relative_change"] == pytest.approx(np.std(vals), abs=1e-15)
