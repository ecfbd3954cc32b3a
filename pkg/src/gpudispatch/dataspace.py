"""Two-tier bandwidth knowledge base: exact per-host tables + learned model.

Single-host GPU sets resolve to exact table entries; sets spanning hosts go
through the predictor. Readers always see a consistent snapshot (tables and
model are swapped atomically); online observations flow into a bounded
reservoir buffer until the next model update.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import predictor as predictor_mod
from .topology import ClusterTopology, mask_of, split_by_host


class DataSpaceError(ValueError):
    """Raised for inconsistent tables, models, or persisted data spaces."""


@dataclass(frozen=True)
class IntraHostTable:
    """Exact bandwidth of every nonempty GPU subset inside one host."""

    host_id: int
    gpu_count: int
    entries: dict[int, float]  # local bit mask -> GB/s

    def __post_init__(self):
        want = (1 << self.gpu_count) - 1
        if len(self.entries) != want or set(self.entries) != set(range(1, want + 1)):
            raise DataSpaceError(
                f"host {self.host_id}: table must cover all {want} nonempty masks, got {len(self.entries)}"
            )
        bad = [m for m, bw in self.entries.items() if bw <= 0]
        if bad:
            raise DataSpaceError(f"host {self.host_id}: non-positive bandwidth at masks {bad[:3]}")

    def bandwidth(self, local_ids) -> float:
        return self.entries[mask_of(local_ids)]

    def best_subset(self, count: int, allowed_mask: int | None = None) -> tuple[int, float]:
        """(mask, bandwidth) of the best ``count``-subset within ``allowed_mask``.

        Ties resolve to the smallest mask, i.e. the lexicographically
        smallest id set.
        """
        if allowed_mask is None:
            allowed_mask = (1 << self.gpu_count) - 1
        best_mask, best_bw = -1, float("-inf")
        for mask in sorted(self.entries):
            if mask & ~allowed_mask:
                continue
            if bin(mask).count("1") != count:
                continue
            bw = self.entries[mask]
            if bw > best_bw:
                best_mask, best_bw = mask, bw
        if best_mask < 0:
            raise DataSpaceError(f"host {self.host_id}: no {count}-subset within allowed mask")
        return best_mask, best_bw

    def to_csv(self) -> str:
        lines = [f"host,{self.host_id},gpus,{self.gpu_count}"]
        lines += [f"{mask},{self.entries[mask]!r}" for mask in sorted(self.entries)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "IntraHostTable":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("host,"):
            raise DataSpaceError("table file missing 'host,<id>,gpus,<n>' header")
        head = lines[0].split(",")
        try:
            host_id, gpu_count = int(head[1]), int(head[3])
        except (IndexError, ValueError):
            raise DataSpaceError(f"malformed table header {lines[0]!r}") from None
        entries = {}
        for ln in lines[1:]:
            mask_s, _, bw_s = ln.partition(",")
            try:
                entries[int(mask_s)] = float(bw_s)
            except ValueError:
                raise DataSpaceError(f"malformed table row {ln!r}") from None
        return cls(host_id, gpu_count, entries)


class ReplayBuffer:
    """Bounded reservoir of cross-host observations with a fresh-sample cursor.

    Every ingested sample keeps the feature sequence captured at observation
    time, so replays stay valid after uplink or table changes.
    """

    def __init__(self, capacity: int = 1024):
        if capacity < 1:
            raise ValueError("buffer capacity must be >= 1")
        self.capacity = capacity
        self._items: list[tuple[int, np.ndarray, float]] = []
        self._total = 0
        self._trained_below = 0
        self._rng = np.random.default_rng(0xEBB)

    def __len__(self) -> int:
        return len(self._items)

    def add(self, seq: np.ndarray, bandwidth: float) -> None:
        self._total += 1
        item = (self._total, np.asarray(seq, dtype=np.float64), float(bandwidth))
        if len(self._items) < self.capacity:
            self._items.append(item)
        else:
            j = int(self._rng.integers(0, self._total))
            if j < self.capacity:
                self._items[j] = item

    def pending_samples(self) -> list[tuple[np.ndarray, float]]:
        """Samples ingested since the last ``mark_trained`` (in the reservoir)."""
        return [(seq, bw) for stamp, seq, bw in self._items if stamp > self._trained_below]

    def sample_old(self, n: int, rng: np.random.Generator) -> list[tuple[np.ndarray, float]]:
        old = [(seq, bw) for stamp, seq, bw in self._items if stamp <= self._trained_below]
        if not old or n <= 0:
            return []
        idx = rng.choice(len(old), size=min(n, len(old)), replace=False)
        return [old[int(i)] for i in idx]

    def mark_trained(self) -> None:
        self._trained_below = self._total


@dataclass(frozen=True)
class _Snapshot:
    tables: dict[int, IntraHostTable]
    model: object
    version: int


class DataSpace:
    """Published bandwidth knowledge for one cluster; reads are lock-free."""

    def __init__(self, topo: ClusterTopology, tables, model, buffer_capacity: int = 1024):
        by_host = {t.host_id: t for t in tables} if not isinstance(tables, dict) else dict(tables)
        for host in topo.hosts:
            t = by_host.get(host.host_id)
            if t is None:
                raise DataSpaceError(f"missing table for host {host.host_id}")
            if t.gpu_count != host.gpu_count:
                raise DataSpaceError(
                    f"table for host {host.host_id} covers {t.gpu_count} GPUs, host has {host.gpu_count}"
                )
        if isinstance(model, predictor_mod.PredictorModel) and model.token_dim != predictor_mod.TOKEN_DIM:
            raise DataSpaceError(f"model token_dim {model.token_dim} incompatible with featurizer")
        self.topo = topo
        self.sample_buffer = ReplayBuffer(buffer_capacity)
        self._lock = threading.Lock()
        self._snap = _Snapshot(by_host, model, 1)

    @property
    def version(self) -> int:
        return self._snap.version

    @property
    def tables(self) -> dict[int, IntraHostTable]:
        return self._snap.tables

    @property
    def model(self):
        return self._snap.model

    def lookup_or_predict(self, s) -> float:
        """Exact table value for single-host sets, model output otherwise."""
        snap = self._snap
        parts = split_by_host(self.topo, frozenset(s))
        if not parts:
            raise ValueError("bandwidth of the empty set is undefined")
        if len(parts) == 1:
            host_id, local = parts[0]
            return snap.tables[host_id].entries[mask_of(local)]
        return float(snap.model.predict_set(self.topo, snap.tables, frozenset(s)))

    def bandwidth_fn(self):
        """Closure over the current snapshot, suitable for the search layer."""
        snap = self._snap
        topo = self.topo

        def bw(s) -> float:
            parts = split_by_host(topo, frozenset(s))
            if not parts:
                raise ValueError("bandwidth of the empty set is undefined")
            if len(parts) == 1:
                host_id, local = parts[0]
                return snap.tables[host_id].entries[mask_of(local)]
            return float(snap.model.predict_set(topo, snap.tables, frozenset(s)))

        return bw

    def ingest_sample(self, s, observed_bw: float) -> None:
        """Fold one live measurement in: table overwrite or buffer append."""
        if observed_bw <= 0:
            raise ValueError(f"observed bandwidth must be positive, got {observed_bw}")
        parts = split_by_host(self.topo, frozenset(s))
        if not parts:
            raise ValueError("cannot ingest the empty set")
        with self._lock:
            snap = self._snap
            if len(parts) == 1:
                host_id, local = parts[0]
                table = snap.tables[host_id]
                entries = dict(table.entries)
                entries[mask_of(local)] = float(observed_bw)
                tables = dict(snap.tables)
                tables[host_id] = IntraHostTable(host_id, table.gpu_count, entries)
                self._snap = _Snapshot(tables, snap.model, snap.version)
            else:
                seq = predictor_mod.featurize(self.topo, snap.tables, frozenset(s))
                self.sample_buffer.add(seq, observed_bw)

    def swap_model(self, model) -> None:
        """Atomically publish a new model; bumps the version."""
        with self._lock:
            snap = self._snap
            self._snap = _Snapshot(snap.tables, model, snap.version + 1)


def build_dataspace(topo: ClusterTopology, tables, model, buffer_capacity: int = 1024) -> DataSpace:
    """Validate table coverage and model compatibility, return a version-1 space."""
    return DataSpace(topo, tables, model, buffer_capacity)


def save_dataspace(ds: DataSpace, path) -> None:
    """Persist as ``tables/host_<id>.csv`` + ``model.bin`` + ``meta``."""
    root = Path(path)
    (root / "tables").mkdir(parents=True, exist_ok=True)
    snap = ds._snap
    for host_id in sorted(snap.tables):
        (root / "tables" / f"host_{host_id}.csv").write_text(snap.tables[host_id].to_csv())
    model = snap.model
    if not isinstance(model, predictor_mod.PredictorModel):
        raise DataSpaceError("only PredictorModel-backed data spaces can be persisted")
    predictor_mod.save_model(model, root / "model.bin")
    meta = f"version={snap.version}\ntopology={ds.topo.structure_hash()}\n"
    (root / "meta").write_text(meta)


def dataspace_size_bytes(path) -> int:
    return sum(p.stat().st_size for p in Path(path).rglob("*") if p.is_file())


def load_dataspace(path, topo: ClusterTopology, buffer_capacity: int = 1024) -> DataSpace:
    """Load a persisted data space, verifying the topology digest."""
    root = Path(path)
    meta_path = root / "meta"
    if not meta_path.exists():
        raise DataSpaceError(f"{root}: not a data space (missing meta)")
    meta = dict(
        line.split("=", 1) for line in meta_path.read_text().splitlines() if "=" in line
    )
    digest = meta.get("topology", "")
    if digest != topo.structure_hash():
        raise DataSpaceError("topology hash mismatch: data space was built for a different cluster")
    tables = []
    for host in topo.hosts:
        table_path = root / "tables" / f"host_{host.host_id}.csv"
        if not table_path.exists():
            raise DataSpaceError(f"missing table file for host {host.host_id}")
        tables.append(IntraHostTable.from_csv(table_path.read_text()))
    model = predictor_mod.load_model(root / "model.bin")
    ds = DataSpace(topo, tables, model, buffer_capacity)
    with ds._lock:
        ds._snap = _Snapshot(ds._snap.tables, ds._snap.model, int(meta.get("version", 1)))
    return ds
