"""Command-line surface: generate clusters, measure, train, dispatch, evaluate.

Exit codes: 0 success, 1 usage, 2 validation/config, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import yaml

from . import baselines, dataspace, evalharness, oracle, predictor, search, simbw, topology


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit(2); usage errors are 1 here
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="gpudispatch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-cluster", help="compose a cluster config from reference host types")
    p.add_argument("--hosts", required=True, help="e.g. 'A800:4' or '4090:1,V100:2'")
    p.add_argument("--uplink", required=True, help="'uniform:GBPS' or 'random:LO-HI'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--unavailable-frac", type=float, default=0.0)
    p.add_argument("--out", default="-", help="output file, '-' for stdout")

    p = sub.add_parser("measure", help="enumerate intra-host tables (simulated or imported)")
    p.add_argument("--cluster", required=True)
    p.add_argument("--out", required=True, help="data-space directory to create")
    p.add_argument("--import", dest="import_log", default=None,
                   help="measurement log of '<ids...>,<bandwidth>' lines overriding synthetic entries")

    p = sub.add_parser("train", help="train the cross-host bandwidth predictor")
    p.add_argument("--cluster", required=True)
    p.add_argument("--tables", required=True, help="data-space dir (or its tables/ dir)")
    p.add_argument("--samples", required=True,
                   help="integer count of synthetic samples, or a measurement-log file")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--patience", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--lr", type=float, default=3e-3)

    p = sub.add_parser("dispatch", help="select k GPUs")
    p.add_argument("--cluster", required=True)
    p.add_argument("-k", type=int, required=True)
    p.add_argument("--algo", default="litegd", choices=evalharness.ALGORITHMS)
    p.add_argument("--dataspace", default=None, help="data-space dir (required for --algo litegd)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true", dest="as_json")

    p = sub.add_parser("evaluate", help="run a sweep experiment, write the report CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("oracle", help="optimal bandwidth for a request size")
    p.add_argument("--cluster", required=True)
    p.add_argument("-k", type=int, required=True)
    p.add_argument("--brute", action="store_true", help="exhaustive instead of pruned search")
    return parser


def _load_cluster(path: str) -> topology.ClusterTopology:
    return topology.parse_cluster_config(Path(path).read_text())


def _tables_dir(path: Path) -> Path:
    return path / "tables" if (path / "tables").is_dir() else path


def _load_tables(topo: topology.ClusterTopology, path: str) -> dict[int, dataspace.IntraHostTable]:
    root = _tables_dir(Path(path))
    tables = {}
    for host in topo.hosts:
        f = root / f"host_{host.host_id}.csv"
        if not f.exists():
            raise dataspace.DataSpaceError(f"missing table file {f}")
        tables[host.host_id] = dataspace.IntraHostTable.from_csv(f.read_text())
    return tables


def _cmd_gen_cluster(args) -> int:
    host_types = evalharness.parse_hosts_arg(args.hosts)
    topo = topology.make_cluster(host_types, args.uplink, args.seed, args.unavailable_frac)
    text = topology.serialize_cluster_config(topo)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    return 0


def _cmd_measure(args) -> int:
    topo = _load_cluster(args.cluster)
    gt = simbw.GroundTruth(topo)
    tables = gt.enumerate_intra_tables()
    if args.import_log:
        records = simbw.parse_measurement_log(Path(args.import_log).read_text())
        tables, cross = simbw.tables_from_log(topo, records, base=tables)
        if cross:
            print(f"note: {len(cross)} cross-host records ignored here (use them for training)",
                  file=sys.stderr)
    out = Path(args.out)
    (out / "tables").mkdir(parents=True, exist_ok=True)
    for table in tables:
        (out / "tables" / f"host_{table.host_id}.csv").write_text(table.to_csv())
    (out / "meta").write_text(f"version=1\ntopology={topo.structure_hash()}\n")
    print(f"wrote {len(tables)} host tables to {out}")
    return 0


def _cmd_train(args) -> int:
    topo = _load_cluster(args.cluster)
    tables = _load_tables(topo, args.tables)
    if args.samples.isdigit():
        gt = simbw.GroundTruth(topo)
        samples = evalharness.training_samples(gt, tables, int(args.samples), [args.seed, 0x5A])
    else:
        records = simbw.parse_measurement_log(Path(args.samples).read_text())
        samples = [(predictor.featurize(topo, tables, ids), bw) for ids, bw in records]
    cfg = predictor.TrainConfig(
        learning_rate=args.lr, max_epochs=args.epochs, patience=args.patience, seed=args.seed
    )
    model = predictor.init_model(seed=args.seed)
    model, history = predictor.train_offline(model, samples, cfg)
    predictor.save_model(model, args.out)
    print(f"trained on {len(samples)} samples, "
          f"best validation MAE {min(h['val_mae'] for h in history):.3f} GB/s -> {args.out}")
    return 0


def _cmd_dispatch(args) -> int:
    topo = _load_cluster(args.cluster)
    available = topo.available
    gt = simbw.GroundTruth(topo)
    t0 = time.perf_counter()
    calls = 0
    predicted: float | None = None
    if args.algo == "default":
        chosen = baselines.default_dispatch(available, args.k)
    elif args.algo == "random":
        chosen = baselines.random_dispatch(available, args.k, seed=[args.seed, args.k, 0xDA])
    elif args.algo == "topo":
        chosen = baselines.topo_aware_dispatch(topo, available, args.k)
    elif args.algo == "upper":
        if args.dataspace:
            tables = _load_tables(topo, args.dataspace)
        else:
            tables = {t.host_id: t for t in gt.enumerate_intra_tables()}
        fn = search.CountingBandwidth(lambda s: gt._effective_value(s))
        res = search.bidirectional_tree_search(available, args.k, fn, topo, tables)
        chosen, predicted, calls = res.chosen, res.predicted_bw, res.bw_calls
    else:  # litegd
        if not args.dataspace:
            raise dataspace.DataSpaceError("--algo litegd requires --dataspace (tables + model.bin)")
        ds = dataspace.load_dataspace(args.dataspace, topo)
        res = search.bidirectional_tree_search(available, args.k, ds.bandwidth_fn(), topo, ds.tables)
        chosen, predicted, calls = res.chosen, res.predicted_bw, res.bw_calls
    elapsed_us = int((time.perf_counter() - t0) * 1e6)
    true_bw = gt._effective_value(chosen)
    ids = sorted(chosen)
    if args.as_json:
        print(json.dumps({
            "chosen": ids,
            "predicted_bw": predicted,
            "true_bw": true_bw,
            "bw_calls": calls,
            "elapsed_us": elapsed_us,
        }))
    else:
        print(" ".join(str(g) for g in ids))
        print(f"predicted_bw_gbps={'none' if predicted is None else repr(predicted)}")
        print(f"true_bw_gbps={true_bw!r}")
        print(f"bw_calls={calls}")
        print(f"elapsed_us={elapsed_us}")
    return 0


def _cmd_evaluate(args) -> int:
    doc = yaml.safe_load(Path(args.config).read_text())
    if not isinstance(doc, dict):
        raise ValueError("experiment config must be a YAML mapping")
    cfg = evalharness.ExperimentConfig.from_dict(doc)
    report = evalharness.run_experiment(cfg)
    out = Path(args.out)
    evalharness.write_report_csv(report, out)
    evalharness.write_per_k_csv(report, out.with_suffix(out.suffix + ".per_k.csv"))
    for algorithm in report.algorithms():
        print(f"{algorithm}: mean GBE {report.mean_gbe(algorithm):.2f}%")
    return 0


def _cmd_oracle(args) -> int:
    topo = _load_cluster(args.cluster)
    gt = simbw.GroundTruth(topo)
    if args.brute:
        chosen, bw = oracle.brute_force_optimal(gt, topo.available, args.k)
    else:
        chosen, bw = oracle.pruned_greedy_optimal(gt, topo, topo.available, args.k)
    print(f"optimal_bw_gbps={bw!r}")
    print(" ".join(str(g) for g in sorted(chosen)))
    return 0


_COMMANDS = {
    "gen-cluster": _cmd_gen_cluster,
    "measure": _cmd_measure,
    "train": _cmd_train,
    "dispatch": _cmd_dispatch,
    "evaluate": _cmd_evaluate,
    "oracle": _cmd_oracle,
}

_VALIDATION_ERRORS = (
    topology.ConfigError,
    dataspace.DataSpaceError,
    predictor.ModelFormatError,
    search.InsufficientGpusError,
    oracle.BruteForceGuardError,
    ValueError,
)


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - boundary: report and exit 3
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    raise SystemExit(cli_main())


if __name__ == "__main__":
    main()
