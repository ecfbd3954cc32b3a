"""Synthetic ground-truth bandwidth for simulated clusters.

Intra-host bandwidth of a GPU set is the minimum perturbed pairwise link
speed over its members (plus optional seeded measurement noise). Cross-host
bandwidth composes by the bottleneck rule: the minimum over the involved
hosts' intra-host projections and switch uplinks. Everything is a pure
deterministic function of (topology, speed table, seed).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable

import numpy as np

from .dataspace import IntraHostTable
from .topology import ClusterTopology, LinkType, mask_of, split_by_host

MIN_BW_GBPS = 0.1


@dataclass(frozen=True)
class AntiLocality:
    """Per-pair multiplicative speed factors for designated host types.

    Factors are drawn uniformly from [lo, hi] per (host, pair) from the
    cluster seed; ``pair_factors`` pins explicit local pairs instead, for
    reproducing specific inversions.
    """

    host_types: frozenset[str] = frozenset({"4090"})
    lo: float = 0.6
    hi: float = 1.25
    pair_factors: tuple[tuple[tuple[int, int], float], ...] | None = None

    def applies_to(self, host_type: str) -> bool:
        return host_type in self.host_types


DEFAULT_LINK_SPEEDS: dict[LinkType, float] = {
    LinkType.SYS: 8.0,
    LinkType.PXB: 10.0,
    LinkType.PIX: 12.0,
    LinkType.NV1: 20.0,
    LinkType.NV2: 40.0,
    LinkType.NV4: 80.0,
    LinkType.NV8: 160.0,
    LinkType.NV16: 200.0,
}


@dataclass(frozen=True)
class LinkSpeedTable:
    """Base pairwise speed per link grade plus perturbation knobs.

    Speeds are free simulator parameters; validation only enforces the
    orderings that matter (NV grades ascend, PCIe grades sit below NV1,
    SYS is the slowest PCIe path).
    """

    speeds: dict[LinkType, float] = field(default_factory=lambda: dict(DEFAULT_LINK_SPEEDS))
    singleton_gbps: float = 300.0
    noise_sigma: float = 0.0
    anti_locality: AntiLocality | None = AntiLocality()

    def __post_init__(self):
        missing = [t for t in LinkType if t is not LinkType.SELF and t not in self.speeds]
        if missing:
            raise ValueError(f"speed table missing link types: {[t.token for t in missing]}")
        sp = self.speeds
        if any(v <= 0 for v in sp.values()) or self.singleton_gbps <= 0:
            raise ValueError("all link speeds must be positive")
        nv = [sp[LinkType.NV1], sp[LinkType.NV2], sp[LinkType.NV4], sp[LinkType.NV8], sp[LinkType.NV16]]
        if not all(a < b for a, b in zip(nv, nv[1:])):
            raise ValueError("NV speeds must ascend: NV1 < NV2 < NV4 < NV8 < NV16")
        if not (sp[LinkType.SYS] < min(sp[LinkType.PIX], sp[LinkType.PXB])):
            raise ValueError("SYS must be the slowest PCIe grade")
        if not max(sp[LinkType.PIX], sp[LinkType.PXB]) < sp[LinkType.NV1]:
            raise ValueError("PCIe grades must sit below NV1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    @classmethod
    def from_config(cls, doc: dict) -> "LinkSpeedTable":
        """Build from a parsed config mapping (same YAML family as clusters)."""
        speeds = dict(DEFAULT_LINK_SPEEDS)
        for token, value in (doc.get("speeds") or {}).items():
            speeds[LinkType.from_token(str(token))] = float(value)
        anti = doc.get("anti_locality", "default")
        if anti == "default":
            anti_spec: AntiLocality | None = AntiLocality()
        elif anti is None:
            anti_spec = None
        else:
            anti_spec = AntiLocality(
                host_types=frozenset(anti.get("host_types", ["4090"])),
                lo=float(anti.get("lo", 0.6)),
                hi=float(anti.get("hi", 1.25)),
            )
        return cls(
            speeds=speeds,
            singleton_gbps=float(doc.get("singleton_gbps", 300.0)),
            noise_sigma=float(doc.get("noise_sigma", 0.0)),
            anti_locality=anti_spec,
        )


class GroundTruth:
    """Deterministic bandwidth oracle over one cluster snapshot.

    Thread-safe; every public bandwidth query bumps ``calls`` by exactly one.
    """

    def __init__(self, topo: ClusterTopology, speeds: LinkSpeedTable | None = None, seed: int | None = None):
        self.topo = topo
        self.speeds = speeds if speeds is not None else LinkSpeedTable()
        self.seed = topo.seed if seed is None else seed
        self._pair_speeds: dict[int, np.ndarray] = {}
        self._intra_cache: dict[tuple[int, int], float] = {}
        self._calls = 0
        self._lock = threading.Lock()

    @property
    def calls(self) -> int:
        with self._lock:
            return self._calls

    def _count(self) -> None:
        with self._lock:
            self._calls += 1

    def _host_pair_speeds(self, host_id: int) -> np.ndarray:
        mat = self._pair_speeds.get(host_id)
        if mat is not None:
            return mat
        host = self.topo.hosts[host_id]
        n = host.gpu_count
        mat = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                if i != j:
                    mat[i, j] = self.speeds.speeds[host.link(i, j)]
        anti = self.speeds.anti_locality
        if anti is not None and anti.applies_to(host.host_type) and n > 1:
            rng = np.random.default_rng([self.seed, host_id, 0xA171])
            for i, j in combinations(range(n), 2):
                factor = float(rng.uniform(anti.lo, anti.hi))
                mat[i, j] *= factor
                mat[j, i] = mat[i, j]
            for (i, j), factor in anti.pair_factors or ():
                base = self.speeds.speeds[host.link(i, j)]
                mat[i, j] = mat[j, i] = base * factor
        self._pair_speeds[host_id] = mat
        return mat

    def _intra_value(self, host_id: int, local_mask: int) -> float:
        """Uncounted intra-host bandwidth for a local bit mask."""
        cached = self._intra_cache.get((host_id, local_mask))
        if cached is not None:
            return cached
        host = self.topo.hosts[host_id]
        if local_mask <= 0 or local_mask >= (1 << host.gpu_count):
            raise ValueError(f"local set out of range for host {host_id} ({host.gpu_count} GPUs)")
        ids = [i for i in range(host.gpu_count) if local_mask >> i & 1]
        if len(ids) == 1:
            value = self.speeds.singleton_gbps
        else:
            mat = self._host_pair_speeds(host_id)
            value = min(float(mat[i, j]) for i, j in combinations(ids, 2))
            if self.speeds.noise_sigma > 0:
                rng = np.random.default_rng([self.seed, host_id, local_mask, 0x7057])
                value += float(rng.normal(0.0, self.speeds.noise_sigma))
            value = max(MIN_BW_GBPS, value)
        self._intra_cache[(host_id, local_mask)] = value
        return value

    def _effective_value(self, s: Iterable[int]) -> float:
        """Uncounted effective bandwidth of a global GPU set."""
        parts = split_by_host(self.topo, frozenset(s))
        if not parts:
            raise ValueError("bandwidth of the empty set is undefined")
        intras = [self._intra_value(h, mask_of(local)) for h, local in parts]
        if len(parts) == 1:
            return intras[0]
        uplinks = [self.topo.hosts[h].uplink_gbps for h, _ in parts]
        return min(min(intras), min(uplinks))

    def intra_host_bandwidth(self, host_id: int, local_set: Iterable[int]) -> float:
        """Bandwidth of a nonempty GPU set inside one host (counted)."""
        mask = mask_of(local_set)
        if mask == 0:
            raise ValueError("bandwidth of the empty set is undefined")
        self._count()
        return self._intra_value(host_id, mask)

    def effective_bandwidth(self, s: Iterable[int]) -> float:
        """Cluster-wide bandwidth of a nonempty GPU set (counted).

        Availability is deliberately ignored: physical bandwidth does not
        depend on what is currently busy.
        """
        value = self._effective_value(s)
        self._count()
        return value

    def enumerate_intra_tables(self) -> list[IntraHostTable]:
        """Exhaustive per-host tables over every nonempty local subset."""
        tables = []
        for host in self.topo.hosts:
            entries = {
                mask: self._intra_value(host.host_id, mask)
                for mask in range(1, 1 << host.gpu_count)
            }
            tables.append(IntraHostTable(host.host_id, host.gpu_count, entries))
        return tables


def parse_measurement_log(text: str) -> list[tuple[frozenset[int], float]]:
    """Parse measurement lines ``<id,id,...>,<bandwidth GB/s>``.

    The external measurement convention: comma-separated global GPU ids with
    the observed collective bandwidth as the final field (all-gather, 16 MB).
    """
    records = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) < 2:
            raise ValueError(f"line {lineno}: expected '<ids...>,<bandwidth>'")
        try:
            ids = frozenset(int(f) for f in fields[:-1])
            bw = float(fields[-1])
        except ValueError:
            raise ValueError(f"line {lineno}: malformed record {line!r}") from None
        if bw <= 0:
            raise ValueError(f"line {lineno}: bandwidth must be positive, got {bw}")
        records.append((ids, bw))
    return records


def tables_from_log(
    topo: ClusterTopology,
    records: list[tuple[frozenset[int], float]],
    base: list[IntraHostTable] | None = None,
) -> tuple[list[IntraHostTable], list[tuple[frozenset[int], float]]]:
    """Fold measured records into per-host tables.

    Single-host records overwrite entries of ``base`` tables (or must fully
    cover every host when no base is given); cross-host records are returned
    untouched for predictor training.
    """
    entries: dict[int, dict[int, float]] = {
        h.host_id: dict(base[h.host_id].entries) if base else {} for h in topo.hosts
    }
    cross = []
    for ids, bw in records:
        parts = split_by_host(topo, ids)
        if len(parts) == 1:
            host_id, local = parts[0]
            entries[host_id][mask_of(local)] = bw
        else:
            cross.append((ids, bw))
    tables = []
    for host in topo.hosts:
        want = (1 << host.gpu_count) - 1
        have = entries[host.host_id]
        if len(have) != want or set(have) != set(range(1, want + 1)):
            missing = sorted(set(range(1, want + 1)) - set(have))
            raise ValueError(
                f"incomplete table for host {host.host_id}: {len(missing)} masks missing (first: {missing[:3]})"
            )
        tables.append(IntraHostTable(host.host_id, host.gpu_count, have))
    return tables, cross
