"""Bandwidth-efficacy experiments: sweeps over k, seeds, and cluster makeups.

Every selected set is scored with ground-truth bandwidth against the pruned
composition oracle; the predictor only ever guides the search. Reports are
deterministic for a fixed config (timing is recorded only when asked, so the
default CSV output is byte-stable).
"""

from __future__ import annotations

import logging
import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines import default_dispatch, random_dispatch, topo_aware_dispatch
from .dataspace import DataSpace, build_dataspace, dataspace_size_bytes, save_dataspace
from .oracle import pruned_greedy_optimal
from .predictor import TrainConfig, featurize, init_model, train_offline
from .search import CountingBandwidth, bidirectional_tree_search
from .simbw import GroundTruth, LinkSpeedTable
from .topology import ClusterTopology, make_cluster

logger = logging.getLogger(__name__)

ALGORITHMS = ("litegd", "upper", "default", "random", "topo")

CSV_HEADER = "algorithm,k,seed,selected_bw_gbps,optimal_bw_gbps,gbe_pct,bw_calls,elapsed_us"


def gbe(selected_bw: float, optimal_bw: float) -> float:
    """Selected over optimal bandwidth, in percent."""
    if selected_bw <= 0 or optimal_bw <= 0:
        raise ValueError(f"bandwidths must be positive, got {selected_bw} and {optimal_bw}")
    return 100.0 * selected_bw / optimal_bw


@dataclass(frozen=True)
class ExperimentConfig:
    host_types: tuple[str, ...]
    uplink: str = "random:20-40"
    unavailable_frac: float = 0.2
    ks: tuple[int, ...] | None = None  # default: every k in [2, N]
    algorithms: tuple[str, ...] = ALGORITHMS
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4, 5, 6, 7, 8, 9)
    repetitions: int = 1
    train_samples: int = 1000
    train: TrainConfig = field(default_factory=TrainConfig)
    speeds: LinkSpeedTable | None = None
    record_timing: bool = False

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.host_types:
            raise ValueError("host_types must not be empty")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise ValueError(f"unknown algorithms {unknown}; known: {ALGORITHMS}")
        if self.ks is not None and any(k < 2 for k in self.ks):
            raise ValueError("k values must be >= 2")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        host_types: list[str] = []
        hosts = doc.get("hosts")
        if isinstance(hosts, str):
            host_types = parse_hosts_arg(hosts)
        elif isinstance(hosts, list):
            for entry in hosts:
                host_types.extend(parse_hosts_arg(str(entry)))
        else:
            raise ValueError("experiment config needs 'hosts' (e.g. 'A6000:4')")
        train_doc = doc.get("train") or {}
        cfg = cls(
            host_types=tuple(host_types),
            uplink=str(doc.get("uplink", "random:20-40")),
            unavailable_frac=float(doc.get("unavailable_frac", 0.2)),
            ks=tuple(int(k) for k in doc["ks"]) if doc.get("ks") else None,
            algorithms=tuple(doc.get("algorithms", ALGORITHMS)),
            seeds=tuple(int(s) for s in doc.get("seeds", range(10))),
            repetitions=int(doc.get("repetitions", 1)),
            train_samples=int(doc.get("train_samples", 1000)),
            train=TrainConfig(**train_doc),
            record_timing=bool(doc.get("record_timing", False)),
        )
        return cfg


def parse_hosts_arg(spec: str) -> list[str]:
    """Expand ``"A800:4,V100:2"`` (or bare ``"A800"``) into a host-type list."""
    out: list[str] = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        name, _, count = part.partition(":")
        out.extend([name] * (int(count) if count else 1))
    if not out:
        raise ValueError(f"empty hosts spec {spec!r}")
    return out


@dataclass(frozen=True)
class ReportRow:
    algorithm: str
    k: int
    seed: int
    selected_bw_gbps: float
    optimal_bw_gbps: float
    gbe_pct: float
    bw_calls: int
    elapsed_us: int


@dataclass(frozen=True)
class GbeReport:
    rows: tuple[ReportRow, ...]

    def mean_gbe(self, algorithm: str) -> float:
        vals = [r.gbe_pct for r in self.rows if r.algorithm == algorithm]
        if not vals:
            raise ValueError(f"no rows for algorithm {algorithm!r}")
        return float(np.mean(vals))

    def mean_gbe_by_k(self, algorithm: str) -> dict[int, float]:
        byk: dict[int, list[float]] = {}
        for r in self.rows:
            if r.algorithm == algorithm:
                byk.setdefault(r.k, []).append(r.gbe_pct)
        return {k: float(np.mean(v)) for k, v in sorted(byk.items())}

    def algorithms(self) -> list[str]:
        return sorted({r.algorithm for r in self.rows})


def random_multihost_sets(
    topo: ClusterTopology, n: int, seed, k_max: int | None = None
) -> list[frozenset[int]]:
    """n random GPU sets spanning at least two hosts, sizes uniform in [2, k_max]."""
    if len(topo.hosts) < 2:
        raise ValueError("cross-host sampling needs at least two hosts")
    total = topo.num_gpus
    k_hi = min(k_max or total, total)
    rng = np.random.default_rng(seed)
    out: list[frozenset[int]] = []
    while len(out) < n:
        k = int(rng.integers(2, k_hi + 1))
        s = frozenset(int(g) for g in rng.choice(total, size=k, replace=False))
        first_host = topo.host_of(min(s))[0]
        if any(topo.host_of(g)[0] != first_host for g in s):
            out.append(s)
    return out


def training_samples(
    gt: GroundTruth,
    tables,
    n: int,
    seed,
    k_max: int | None = None,
) -> list[tuple[np.ndarray, float]]:
    """(feature sequence, ground-truth bandwidth) pairs for cross-host sets."""
    by_host = {t.host_id: t for t in tables} if not isinstance(tables, dict) else tables
    sets = random_multihost_sets(gt.topo, n, seed, k_max)
    return [(featurize(gt.topo, by_host, s), gt._effective_value(s)) for s in sets]


def _train_dataspace(gt: GroundTruth, tables, cfg: ExperimentConfig, seed: int) -> DataSpace:
    if len(gt.topo.hosts) < 2:
        # Single-host clusters never consult the model; exact tables suffice.
        return build_dataspace(gt.topo, tables, init_model(seed=seed))
    samples = training_samples(gt, tables, cfg.train_samples, [seed, 0x5A])
    model = init_model(seed=seed)
    model, history = train_offline(model, samples, replace(cfg.train, seed=seed))
    logger.info("seed %d: trained predictor, val MAE %.3f GB/s", seed, history[-1]["val_mae"])
    return build_dataspace(gt.topo, tables, model)


def _dispatch_once(
    algorithm: str,
    topo: ClusterTopology,
    gt: GroundTruth,
    tables: dict,
    ds: DataSpace | None,
    available: frozenset[int],
    k: int,
    seed: int,
) -> tuple[frozenset[int], int, float]:
    """Returns (selection, bw_calls, elapsed_seconds)."""
    t0 = time.perf_counter()
    if algorithm == "default":
        sel, calls = default_dispatch(available, k), 0
    elif algorithm == "random":
        sel, calls = random_dispatch(available, k, seed=[seed, k, 0xDA]), 0
    elif algorithm == "topo":
        sel, calls = topo_aware_dispatch(topo, available, k), 0
    elif algorithm == "upper":
        fn = CountingBandwidth(lambda s: gt._effective_value(s))
        res = bidirectional_tree_search(available, k, fn, topo, tables)
        sel, calls = res.chosen, res.bw_calls
    elif algorithm == "litegd":
        if ds is None:
            raise ValueError("predictor-guided dispatch needs a trained data space")
        res = bidirectional_tree_search(available, k, ds.bandwidth_fn(), topo, ds.tables)
        sel, calls = res.chosen, res.bw_calls
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    return sel, calls, time.perf_counter() - t0


def _expanded_seeds(cfg: ExperimentConfig) -> list[int]:
    if cfg.repetitions == 1:
        return list(cfg.seeds)
    return [s * 1009 + r for s in cfg.seeds for r in range(cfg.repetitions)]


def run_experiment(cfg: ExperimentConfig) -> GbeReport:
    """Full sweep; every selection is scored with ground truth vs the oracle.

    An exact-bandwidth 'upper' run is always included alongside whatever the
    config asks for. k values above the seed's available GPU count are
    skipped.
    """
    algorithms = tuple(dict.fromkeys(list(cfg.algorithms) + ["upper"]))
    rows: list[ReportRow] = []
    for seed in _expanded_seeds(cfg):
        topo = make_cluster(list(cfg.host_types), cfg.uplink, seed, cfg.unavailable_frac)
        gt = GroundTruth(topo, cfg.speeds)
        tables = {t.host_id: t for t in gt.enumerate_intra_tables()}
        available = topo.available
        ds = _train_dataspace(gt, tables, cfg, seed) if "litegd" in algorithms else None
        ks = cfg.ks if cfg.ks is not None else tuple(range(2, topo.num_gpus + 1))
        for k in ks:
            if k > len(available):
                continue
            _, optimal_bw = pruned_greedy_optimal(gt, topo, available, k)
            for algorithm in algorithms:
                sel, calls, elapsed = _dispatch_once(
                    algorithm, topo, gt, tables, ds, available, k, seed
                )
                selected_bw = gt._effective_value(sel)
                rows.append(ReportRow(
                    algorithm=algorithm,
                    k=k,
                    seed=seed,
                    selected_bw_gbps=selected_bw,
                    optimal_bw_gbps=optimal_bw,
                    gbe_pct=gbe(selected_bw, optimal_bw),
                    bw_calls=calls,
                    elapsed_us=int(elapsed * 1e6) if cfg.record_timing else 0,
                ))
        logger.info("seed %d: done", seed)
    rows.sort(key=lambda r: (r.algorithm, r.k, r.seed))
    return GbeReport(tuple(rows))


def write_report_csv(report: GbeReport, path) -> None:
    """Fixed-order CSV plus a per-algorithm summary block (comment lines)."""
    lines = [CSV_HEADER]
    for r in report.rows:
        lines.append(
            f"{r.algorithm},{r.k},{r.seed},{r.selected_bw_gbps!r},"
            f"{r.optimal_bw_gbps!r},{r.gbe_pct!r},{r.bw_calls},{r.elapsed_us}"
        )
    for algorithm in report.algorithms():
        lines.append(f"# summary,algorithm={algorithm},mean_gbe_pct={report.mean_gbe(algorithm)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_per_k_csv(report: GbeReport, path) -> None:
    """Per-(algorithm, k) mean GBE, the plottable sweep data."""
    lines = ["algorithm,k,mean_gbe_pct"]
    for algorithm in report.algorithms():
        for k, mean in report.mean_gbe_by_k(algorithm).items():
            lines.append(f"{algorithm},{k},{mean!r}")
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class OverheadRow:
    algorithm: str
    k: int
    mean_bw_calls: float
    mean_score_evals: float
    mean_elapsed_us: float
    dataspace_bytes: int
    budget_bytes: int


def overhead_report(cfg: ExperimentConfig) -> list[OverheadRow]:
    """Instrumentation sweep: calls, score evaluations, wall time, storage.

    The storage column is the serialized data-space size, reported next to
    the (642 + 12 per host) KB budget it is expected to stay under.
    """
    algorithms = tuple(dict.fromkeys(list(cfg.algorithms) + ["upper"]))
    budget_bytes = (642 + 12 * len(cfg.host_types)) * 1024
    acc: dict[tuple[str, int], list[tuple[int, int, float]]] = {}
    ds_bytes = 0
    for seed in _expanded_seeds(cfg):
        topo = make_cluster(list(cfg.host_types), cfg.uplink, seed, cfg.unavailable_frac)
        gt = GroundTruth(topo, cfg.speeds)
        tables = {t.host_id: t for t in gt.enumerate_intra_tables()}
        available = topo.available
        ds = _train_dataspace(gt, tables, cfg, seed) if "litegd" in algorithms else None
        if ds is not None and ds_bytes == 0:
            with tempfile.TemporaryDirectory() as tmp:
                save_dataspace(ds, tmp)
                ds_bytes = dataspace_size_bytes(tmp)
        ks = cfg.ks if cfg.ks is not None else tuple(range(2, topo.num_gpus + 1))
        for k in ks:
            if k > len(available):
                continue
            for algorithm in algorithms:
                t0 = time.perf_counter()
                if algorithm == "topo":
                    stats: dict = {}
                    topo_aware_dispatch(topo, available, k, stats=stats)
                    calls, score_evals = 0, stats["score_evals"]
                else:
                    _, calls, _ = _dispatch_once(algorithm, topo, gt, tables, ds, available, k, seed)
                    score_evals = 0
                elapsed_us = (time.perf_counter() - t0) * 1e6
                acc.setdefault((algorithm, k), []).append((calls, score_evals, elapsed_us))
    rows = []
    for (algorithm, k), samples in sorted(acc.items()):
        rows.append(OverheadRow(
            algorithm=algorithm,
            k=k,
            mean_bw_calls=float(np.mean([s[0] for s in samples])),
            mean_score_evals=float(np.mean([s[1] for s in samples])),
            mean_elapsed_us=float(np.mean([s[2] for s in samples])),
            dataspace_bytes=ds_bytes,
            budget_bytes=budget_bytes,
        ))
    return rows
