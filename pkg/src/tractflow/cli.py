"""Command-line pipeline: ingest, train, eval, scenario, serve.

Every command is deterministic under a fixed seed and fixed inputs. Artifacts
carry no timestamps; wall-clock context lives only in the run manifest, so
checkpoints, logs and reports from identical reruns are byte-identical.

Exit codes: 0 success, 2 usage, 3 data error, 4 numeric divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

from .encoder import GatConfig
from .errors import DataError, MissingInput, NumericError, TractFlowError
from .gbrt import BoostConfig
from .geodata import (FeatureSchema, FlowTable, GreatCircleDistance, KNearest,
                      MatrixDistance, Radius, TractGraph, build_graph,
                      load_flows, load_tracts, split_flows)
from .model import TrainedModel, train_model
from .scenario import (DEFAULT_DISTANCE_CUTOFF_KM, DEFAULT_HISTOGRAM_BINS,
                       Scenario, evaluate_scenario)
from .training import TrainConfig

DATASET_KIND = "tractflow-dataset"
DATASET_FORMAT_VERSION = 1

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

# flag name -> (config dataclass, field) for train; config file uses the same names
TRAIN_KEYS = {f.name: ("train", f.name) for f in dataclasses.fields(TrainConfig)}
ENCODER_KEYS = {f.name: ("encoder", f.name) for f in dataclasses.fields(GatConfig)}
BOOST_KEYS = {
    "rounds": ("boost", "rounds"),
    "boost_learning_rate": ("boost", "learning_rate"),
    "max_depth": ("boost", "max_depth"),
    "min_samples_leaf": ("boost", "min_samples_leaf"),
    "early_stopping_rounds": ("boost", "early_stopping_rounds"),
}
ALL_CONFIG_KEYS = {**TRAIN_KEYS, **ENCODER_KEYS, **BOOST_KEYS}


def _file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")


def write_manifest(out_dir: Path, command: str, config: dict,
                   inputs: dict[str, str], seed, outputs: list[str],
                   started: str, finished: str) -> Path:
    manifest = {
        "command": command,
        "config_hash": hashlib.sha256(_canonical_json(config).encode()).hexdigest(),
        "config": config,
        "inputs": {name: _file_digest(p) for name, p in inputs.items()},
        "seed": seed,
        "outputs": outputs,
        "started": started,
        "finished": finished,
    }
    path = out_dir / "manifest.json"
    _write_json(path, manifest)
    return path


def _now() -> str:
    import datetime
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


# ---------------------------------------------------------------------------
# Config resolution: dataclass defaults <- config file <- explicit flags
# ---------------------------------------------------------------------------

def resolve_configs(args: argparse.Namespace
                    ) -> tuple[TrainConfig, GatConfig, BoostConfig, dict]:
    values = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise MissingInput(str(path))
        file_conf = json.loads(path.read_text())
        for key, value in file_conf.items():
            if key not in ALL_CONFIG_KEYS:
                raise DataError(f"unknown config key {key!r}")
            values[key] = value
    for key in ALL_CONFIG_KEYS:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            values[key] = flag_value

    def build(cls, keys):
        kwargs = {field: values[flag] for flag, (group, field) in keys.items()
                  if flag in values}
        return cls(**kwargs)

    train_conf = build(TrainConfig, TRAIN_KEYS)
    gat_conf = build(GatConfig, ENCODER_KEYS)
    boost_conf = build(BoostConfig, BOOST_KEYS)
    resolved = {
        "train": dataclasses.asdict(train_conf),
        "encoder": dataclasses.asdict(gat_conf),
        "boost": dataclasses.asdict(boost_conf),
    }
    return train_conf, gat_conf, boost_conf, resolved


# ---------------------------------------------------------------------------
# Dataset loading shared by ingest and train
# ---------------------------------------------------------------------------

def _load_dataset_files(args) -> tuple[TractGraph, FlowTable, FeatureSchema, dict]:
    inputs = {"tracts": args.tracts, "flows": args.flows}
    schema = None
    if getattr(args, "schema", None):
        path = Path(args.schema)
        if not path.exists():
            raise MissingInput(str(path))
        schema = FeatureSchema.from_dict(json.loads(path.read_text()))
        inputs["schema"] = args.schema
    tracts, schema = load_tracts(args.tracts, schema)
    if getattr(args, "radius_km", None) is not None:
        policy = Radius(args.radius_km)
    else:
        policy = KNearest(args.knn if getattr(args, "knn", None) else 8)
    distance = None
    if getattr(args, "distances", None):
        distance = MatrixDistance.from_csv(args.distances)
        inputs["distances"] = args.distances
    graph = build_graph(tracts, policy, distance)
    raw = load_flows(args.flows)
    flows = split_flows(raw, seed=args.split_seed)
    flows.validate_ids(graph)
    return graph, flows, schema, inputs


def load_dataset_bundle(path: str | Path) -> tuple[TractGraph, FlowTable, FeatureSchema]:
    path = Path(path)
    if not path.exists():
        raise MissingInput(str(path))
    d = json.loads(path.read_text())
    if d.get("kind") != DATASET_KIND:
        raise DataError(f"not a dataset bundle: {path}")
    graph = TractGraph.from_dict(d["graph"])
    flows = FlowTable.from_list(d["flows"])
    schema = FeatureSchema.from_dict(d["schema"])
    return graph, flows, schema


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    started = _now()
    graph, flows, schema, inputs = _load_dataset_files(args)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    bundle = {
        "kind": DATASET_KIND,
        "format_version": DATASET_FORMAT_VERSION,
        "schema": schema.to_dict(),
        "graph": graph.to_dict(),
        "flows": flows.to_list(),
    }
    out.write_text(_canonical_json(bundle) + "\n")
    counts = flows.split_counts()
    print(f"ingested {len(graph)} tracts, {len(flows)} flow pairs "
          f"(train/val/test {counts['train']}/{counts['val']}/{counts['test']})")
    print(f"dataset written to {out}")
    write_manifest(out.parent if out.parent != Path(".") else Path("."),
                   "ingest", {"split_seed": args.split_seed,
                              "policy": graph.policy},
                   inputs, args.split_seed, [str(out)], started, _now())
    return EXIT_OK


def cmd_train(args) -> int:
    started = _now()
    train_conf, gat_conf, boost_conf, resolved = resolve_configs(args)
    train_conf = dataclasses.replace(train_conf, seed=args.seed)
    resolved["train"]["seed"] = args.seed

    distance_provider = None
    if args.dataset:
        graph, flows, schema = load_dataset_bundle(args.dataset)
        inputs = {"dataset": args.dataset}
    else:
        if not (args.tracts and args.flows):
            raise UsageError("train needs --dataset or both --tracts and --flows")
        graph, flows, schema, inputs = _load_dataset_files(args)
        if getattr(args, "distances", None):
            distance_provider = MatrixDistance.from_csv(args.distances)

    model = train_model(graph, flows, schema, gat_conf, train_conf, boost_conf,
                        distance_provider=distance_provider)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint = out_dir / "checkpoint.json"
    model.save(checkpoint)
    log_path = out_dir / "training_log.csv"
    log_path.write_text("\n".join(model.train_result.log_lines()) + "\n")

    report = model.evaluate("test")
    report_path = out_dir / "report.json"
    report_path.write_text(report.machine_line() + "\n")
    print(report.table(args.label))
    print(f"checkpoint written to {checkpoint}")

    write_manifest(out_dir, "train", resolved, inputs, args.seed,
                   [str(checkpoint), str(log_path), str(report_path)],
                   started, _now())
    return EXIT_OK


def cmd_eval(args) -> int:
    model = TrainedModel.load(args.checkpoint)
    flows = None
    if args.flows:
        records = load_flows(args.flows)
        # externally supplied flows are one holdout set, all in the asked split
        flows = FlowTable(tuple(
            dataclasses.replace(r, split=args.split) for r in records))
        flows.validate_ids(model.graph)
    report = model.evaluate(args.split, flows=flows)
    if args.json:
        print(report.machine_line())
    else:
        print(report.table(args.label))
    return EXIT_OK


def cmd_scenario(args) -> int:
    started = _now()
    model = TrainedModel.load(args.checkpoint)
    scenario = Scenario.load(args.scenario)
    payload = evaluate_scenario(model, scenario, radius_km=args.radius_km,
                                bins=args.bins,
                                distance_cutoff_km=args.cutoff_km)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    from .scenario import FlowDiff
    diff = FlowDiff.from_dict(payload["diff"], payload["name"])
    diff_path = out_dir / "diff.csv"
    diff_path.write_text("\n".join(diff.csv_lines()) + "\n")
    summary_path = out_dir / "summary.json"
    summary_path.write_text(_canonical_json(payload) + "\n")

    s = payload["summary"]
    print(f"scenario {payload['name']!r} ({payload['scenario_id']})")
    print(f"  filter: {s['filter']}")
    print(f"  defined pairs: {s['n_defined']}  zero-baseline pairs: {s['n_undefined']}")
    print(f"  mean relative change: {s['mean_relative_change']:+.4f}")
    print(f"  std relative change:  {s['std_relative_change']:.4f}")

    write_manifest(out_dir, "scenario",
                   {"radius_km": args.radius_km, "bins": args.bins,
                    "cutoff_km": args.cutoff_km},
                   {"checkpoint": args.checkpoint, "scenario": args.scenario},
                   None, [str(diff_path), str(summary_path)], started, _now())
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app
    app = create_app(args.checkpoint, static_dir=args.static)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_dataset_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tracts", help="tract table (CSV or GeoJSON)")
    p.add_argument("--flows", help="flow table CSV (origin_id,dest_id,commuters)")
    p.add_argument("--schema", help="indicator schema JSON (default: inferred, "
                                    "all indicators nonnegative)")
    p.add_argument("--distances", help="optional distance matrix CSV")
    p.add_argument("--knn", type=int, help="k-nearest adjacency (default 8)")
    p.add_argument("--radius-km", dest="radius_km", type=float,
                   help="radius adjacency instead of k-nearest")
    p.add_argument("--split-seed", dest="split_seed", type=int, default=0,
                   help="seed for the 60/20/20 pair split")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tractflow",
        description="Commuting-flow modeling and scenario analysis over census tracts.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate inputs and write a dataset bundle")
    _add_dataset_flags(p)
    p.add_argument("--out", required=True, help="output dataset bundle path")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train encoders and flow predictor")
    _add_dataset_flags(p)
    p.add_argument("--dataset", help="dataset bundle from ingest (alternative to --tracts/--flows)")
    p.add_argument("--out", default="run", help="output directory (default run)")
    p.add_argument("--seed", type=int, required=True, help="training seed")
    p.add_argument("--label", default="synthetic", help="dataset label for the report")
    p.add_argument("--config", help="JSON config file; explicit flags win")
    for flag, (group, field) in sorted(ALL_CONFIG_KEYS.items()):
        if flag == "seed":
            continue
        if flag == "log_targets":
            p.add_argument("--log-targets", dest="log_targets",
                           action="store_const", const=True,
                           help="regress log1p(counts)")
            continue
        kind = {"lr": float, "weight_decay": float, "aux_weight_in": float,
                "aux_weight_out": float, "distance_scale_km": float,
                "boost_learning_rate": float}.get(flag, int)
        if flag == "optimizer":
            p.add_argument("--optimizer", choices=("sgd", "momentum", "adam"))
            continue
        p.add_argument("--" + flag.replace("_", "-"), dest=flag, type=kind)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on one split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--flows", help="external flow CSV; becomes the asked split")
    p.add_argument("--label", default="synthetic")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("scenario", help="evaluate a what-if scenario")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--out", default="scenario_out", help="output directory")
    p.add_argument("--radius-km", dest="radius_km", type=float,
                   help="restrict summary to pairs near edited tracts")
    p.add_argument("--bins", type=int, default=DEFAULT_HISTOGRAM_BINS)
    p.add_argument("--cutoff-km", dest="cutoff_km", type=float,
                   default=DEFAULT_DISTANCE_CUTOFF_KM,
                   help="pair-universe distance cap")
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("serve", help="serve a checkpoint over HTTP")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--static", help="directory of UI assets to serve at /")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, TractFlowError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
