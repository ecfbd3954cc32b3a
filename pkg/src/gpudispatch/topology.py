"""Cluster topology: link matrices, global GPU indexing, availability.

A cluster is an ordered list of hosts. Each host carries an nvidia-smi style
link matrix (tokens X/PIX/PXB/SYS/NV1..NV16) and a single uplink to the
inter-host switch. GPUs get contiguous global ids in host order; a GPU set is
a plain ``frozenset`` of global ids.
"""

from __future__ import annotations

import enum
import hashlib
import zlib
from dataclasses import dataclass, field

import numpy as np
import yaml

MAX_GPUS_PER_HOST = 8


class ConfigError(ValueError):
    """Raised for malformed or inconsistent cluster configuration input."""


class LinkType(enum.Enum):
    """Interconnect class between two GPUs of one host."""

    SELF = "X"
    PIX = "PIX"
    PXB = "PXB"
    SYS = "SYS"
    NV1 = "NV1"
    NV2 = "NV2"
    NV4 = "NV4"
    NV8 = "NV8"
    NV16 = "NV16"

    @classmethod
    def from_token(cls, token: str) -> "LinkType":
        t = token.strip().upper()
        if t == "X":
            return cls.SELF
        try:
            return cls[t]
        except KeyError:
            raise ConfigError(f"unknown link token {token!r}") from None

    @property
    def token(self) -> str:
        return self.value


# Per-GPU-pair link tokens of the reference host generations, as reported by
# nvidia-smi-style topology matrices. H100 shares the A800 shape with every
# pair on NV16.
_MATRIX_4090 = """
X   PXB PXB PXB SYS SYS SYS SYS
PXB X   PXB PXB SYS SYS SYS SYS
PXB PXB X   PIX SYS SYS SYS SYS
PXB PXB PIX X   SYS SYS SYS SYS
SYS SYS SYS SYS X   PXB PXB PXB
SYS SYS SYS SYS PXB X   PXB PXB
SYS SYS SYS SYS PXB PXB X   PIX
SYS SYS SYS SYS PXB PXB PIX X
"""

_MATRIX_V100 = """
X   NV1 NV2 NV1 SYS SYS SYS NV2
NV1 X   NV1 NV2 SYS SYS NV2 SYS
NV2 NV1 X   NV2 SYS NV1 SYS SYS
NV1 NV2 NV2 X   NV1 SYS SYS SYS
SYS SYS SYS NV1 X   NV2 NV2 NV1
SYS SYS NV1 SYS NV2 X   NV1 NV2
SYS NV2 SYS SYS NV2 NV1 X   NV1
NV2 SYS SYS SYS NV1 NV2 NV1 X
"""

_MATRIX_A6000 = """
X   NV4 PXB PXB SYS SYS SYS SYS
NV4 X   PXB PXB SYS SYS SYS SYS
PXB PXB X   NV4 SYS SYS SYS SYS
PXB PXB NV4 X   SYS SYS SYS SYS
SYS SYS SYS SYS X   NV4 PXB PXB
SYS SYS SYS SYS NV4 X   PXB PXB
SYS SYS SYS SYS PXB PXB X   NV4
SYS SYS SYS SYS PXB PXB NV4 X
"""


def _uniform_matrix(token: str, n: int = 8) -> str:
    rows = []
    for i in range(n):
        rows.append(" ".join("X" if i == j else token for j in range(n)))
    return "\n".join(rows)


HOST_TYPE_MATRICES: dict[str, str] = {
    "4090": _MATRIX_4090,
    "V100": _MATRIX_V100,
    "A6000": _MATRIX_A6000,
    "A800": _uniform_matrix("NV8"),
    "H100": _uniform_matrix("NV16"),
}

# Stable feature index per host generation; unknown names hash into a fixed
# range above the known ones so featurization never depends on cluster makeup.
KNOWN_HOST_TYPES = ("4090", "A6000", "A800", "H100", "V100")


def host_type_index(host_type: str) -> int:
    try:
        return KNOWN_HOST_TYPES.index(host_type)
    except ValueError:
        return len(KNOWN_HOST_TYPES) + zlib.crc32(host_type.encode()) % 11


def parse_topo_matrix(text: str) -> tuple[tuple[LinkType, ...], ...]:
    """Parse a whitespace-separated token grid into a link matrix.

    Header rows/columns in the nvidia-smi style (``GPU0 GPU1 ...``) are
    tolerated and stripped. The result must be square and symmetric with X
    on the diagonal.
    """
    rows: list[list[LinkType]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        # Drop a row label such as "GPU3:" if present.
        if tokens and not _is_link_token(tokens[0]):
            tokens = tokens[1:]
        if not tokens:
            continue
        if not any(_is_link_token(t) for t in tokens):
            continue  # pure header line
        try:
            rows.append([LinkType.from_token(t) for t in tokens])
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    if not rows:
        raise ConfigError("empty link matrix")
    n = len(rows)
    for i, row in enumerate(rows):
        if len(row) != n:
            raise ConfigError(f"non-square link matrix: row {i} has {len(row)} entries, expected {n}")
    _validate_matrix(rows)
    return tuple(tuple(row) for row in rows)


def _is_link_token(token: str) -> bool:
    t = token.strip().upper().rstrip(":")
    return t == "X" or t in LinkType.__members__


def _validate_matrix(rows: list[list[LinkType]]) -> None:
    n = len(rows)
    for i in range(n):
        if rows[i][i] is not LinkType.SELF:
            raise ConfigError(f"diagonal entry ({i},{i}) must be X, got {rows[i][i].token}")
        for j in range(n):
            if i != j and rows[i][j] is LinkType.SELF:
                raise ConfigError(f"X off the diagonal at ({i},{j})")
            if rows[i][j] is not rows[j][i]:
                raise ConfigError(
                    f"asymmetric link matrix: ({i},{j})={rows[i][j].token} "
                    f"vs ({j},{i})={rows[j][i].token}"
                )


@dataclass(frozen=True)
class HostSpec:
    """One physical host: its GPU count, link matrix, and switch uplink."""

    host_id: int
    host_type: str
    gpu_count: int
    link_matrix: tuple[tuple[LinkType, ...], ...]
    uplink_gbps: float

    def __post_init__(self):
        if self.host_id < 0:
            raise ConfigError(f"host id must be non-negative, got {self.host_id}")
        if not 1 <= self.gpu_count <= MAX_GPUS_PER_HOST:
            raise ConfigError(
                f"host {self.host_id}: gpu count {self.gpu_count} outside [1, {MAX_GPUS_PER_HOST}]"
            )
        if len(self.link_matrix) != self.gpu_count or any(
            len(r) != self.gpu_count for r in self.link_matrix
        ):
            raise ConfigError(
                f"host {self.host_id}: link matrix shape does not match gpu count {self.gpu_count}"
            )
        _validate_matrix([list(r) for r in self.link_matrix])
        if not self.uplink_gbps > 0:
            raise ConfigError(f"host {self.host_id}: uplink must be positive, got {self.uplink_gbps}")

    def link(self, i: int, j: int) -> LinkType:
        return self.link_matrix[i][j]


@dataclass(frozen=True)
class ClusterTopology:
    """Immutable cluster snapshot: hosts, global indexing, availability."""

    hosts: tuple[HostSpec, ...]
    available: frozenset[int]
    seed: int = 0
    _starts: tuple[int, ...] = field(init=False, repr=False, compare=False)
    _locate: tuple[tuple[int, int], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.hosts:
            raise ConfigError("cluster must contain at least one host")
        for idx, h in enumerate(self.hosts):
            if h.host_id != idx:
                raise ConfigError(f"host ids must be 0..{len(self.hosts) - 1} in order, got {h.host_id} at {idx}")
        starts, locate, total = [], [], 0
        for h in self.hosts:
            starts.append(total)
            locate.extend((h.host_id, local) for local in range(h.gpu_count))
            total += h.gpu_count
        object.__setattr__(self, "_starts", tuple(starts))
        object.__setattr__(self, "_locate", tuple(locate))
        bad = [g for g in self.available if not 0 <= g < total]
        if bad:
            raise ConfigError(f"available ids out of range [0, {total}): {sorted(bad)}")

    @property
    def num_gpus(self) -> int:
        return len(self._locate)

    def host_of(self, gpu_id: int) -> tuple[int, int]:
        """Map a global GPU id to (host_id, local id)."""
        if not 0 <= gpu_id < len(self._locate):
            raise ConfigError(f"gpu id {gpu_id} out of range [0, {self.num_gpus})")
        return self._locate[gpu_id]

    def global_id(self, host_id: int, local_id: int) -> int:
        host = self.hosts[host_id]
        if not 0 <= local_id < host.gpu_count:
            raise ConfigError(f"local id {local_id} out of range for host {host_id}")
        return self._starts[host_id] + local_id

    def host_gpus(self, host_id: int) -> range:
        """Global id range of one host."""
        start = self._starts[host_id]
        return range(start, start + self.hosts[host_id].gpu_count)

    def structure_hash(self) -> str:
        """Stable digest of hosts, links, uplinks, and seed (not availability)."""
        parts = [str(self.seed)]
        for h in self.hosts:
            rows = ";".join(",".join(t.token for t in row) for row in h.link_matrix)
            parts.append(f"{h.host_id}|{h.host_type}|{h.gpu_count}|{rows}|{h.uplink_gbps!r}")
        return hashlib.sha256("\n".join(parts).encode()).hexdigest()


def split_by_host(topo: ClusterTopology, s: frozenset[int]) -> list[tuple[int, frozenset[int]]]:
    """Project a global GPU set onto hosts as (host_id, local id set) pairs.

    Only hosts with a nonempty projection appear, in host_id order.
    """
    byhost: dict[int, set[int]] = {}
    for g in s:
        host_id, local = topo.host_of(g)
        byhost.setdefault(host_id, set()).add(local)
    return [(h, frozenset(byhost[h])) for h in sorted(byhost)]


def mask_of(local_ids) -> int:
    """Local id set -> bit mask (bit i == local GPU i)."""
    m = 0
    for i in local_ids:
        m |= 1 << i
    return m


def ids_of(mask: int) -> frozenset[int]:
    """Bit mask -> local id set."""
    out, i = set(), 0
    while mask:
        if mask & 1:
            out.add(i)
        mask >>= 1
        i += 1
    return frozenset(out)


def parse_cluster_config(text: str) -> ClusterTopology:
    """Parse a YAML cluster document into a validated topology.

    Schema: ``hosts`` (list of ``{id, type, gpus, links, uplink_gbps}``),
    ``seed`` (optional int), ``available`` (optional list of global ids,
    default all). ``links`` rows may be strings or token lists.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None
    if not isinstance(doc, dict) or "hosts" not in doc:
        raise ConfigError("cluster config must be a mapping with a 'hosts' list")
    hosts = []
    for idx, entry in enumerate(doc["hosts"]):
        where = f"hosts[{idx}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"{where}: expected a mapping")
        try:
            host_id = int(entry["id"])
            host_type = str(entry["type"])
            gpus = int(entry["gpus"])
            links = entry["links"]
            uplink = float(entry["uplink_gbps"])
        except KeyError as exc:
            raise ConfigError(f"{where}: missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from None
        if isinstance(links, str):
            matrix_text = links
        elif isinstance(links, list):
            matrix_text = "\n".join(
                row if isinstance(row, str) else " ".join(str(t) for t in row) for row in links
            )
        else:
            raise ConfigError(f"{where}.links: expected string rows or token lists")
        try:
            matrix = parse_topo_matrix(matrix_text)
        except ConfigError as exc:
            raise ConfigError(f"{where}.links: {exc}") from None
        try:
            hosts.append(HostSpec(host_id, host_type, gpus, matrix, uplink))
        except ConfigError as exc:
            raise ConfigError(f"{where}: {exc}") from None
    total = sum(h.gpu_count for h in hosts)
    if "available" in doc and doc["available"] is not None:
        available = frozenset(int(g) for g in doc["available"])
    else:
        available = frozenset(range(total))
    seed = int(doc.get("seed", 0))
    return ClusterTopology(tuple(hosts), available, seed)


def serialize_cluster_config(topo: ClusterTopology) -> str:
    """Render a topology back to the YAML cluster document format."""
    doc = {
        "seed": topo.seed,
        "hosts": [
            {
                "id": h.host_id,
                "type": h.host_type,
                "gpus": h.gpu_count,
                "links": [" ".join(t.token for t in row) for row in h.link_matrix],
                "uplink_gbps": h.uplink_gbps,
            }
            for h in topo.hosts
        ],
    }
    if topo.available != frozenset(range(topo.num_gpus)):
        doc["available"] = sorted(topo.available)
    return yaml.safe_dump(doc, sort_keys=False)


@dataclass(frozen=True)
class UplinkSpec:
    """Switch uplink assignment: the same value everywhere, or per-host random."""

    kind: str  # "uniform" | "random"
    lo: float
    hi: float

    @classmethod
    def parse(cls, text: str) -> "UplinkSpec":
        """Parse ``uniform:G`` or ``random:LO-HI`` (GB/s)."""
        try:
            kind, _, rest = text.partition(":")
            if kind == "uniform":
                v = float(rest)
                spec = cls("uniform", v, v)
            elif kind == "random":
                lo_s, _, hi_s = rest.partition("-")
                spec = cls("random", float(lo_s), float(hi_s))
            else:
                raise ValueError(f"unknown uplink mode {kind!r}")
        except ValueError as exc:
            raise ConfigError(f"bad uplink spec {text!r}: {exc}") from None
        if not (0 < spec.lo <= spec.hi):
            raise ConfigError(f"bad uplink spec {text!r}: need 0 < lo <= hi")
        return spec

    def draw(self, n: int, seed: int) -> list[float]:
        if self.kind == "uniform":
            return [self.lo] * n
        rng = np.random.default_rng([seed, 0x5E11])
        return [float(v) for v in rng.uniform(self.lo, self.hi, size=n)]


def make_cluster(
    host_types: list[str],
    uplink: UplinkSpec | str,
    seed: int = 0,
    unavailable_frac: float = 0.0,
) -> ClusterTopology:
    """Compose a cluster from reference host types with 8 GPUs per host.

    ``unavailable_frac`` marks each GPU unavailable independently with that
    probability (re-drawn until at least two GPUs remain available).
    """
    if isinstance(uplink, str):
        uplink = UplinkSpec.parse(uplink)
    uplinks = uplink.draw(len(host_types), seed)
    hosts = []
    for idx, htype in enumerate(host_types):
        if htype not in HOST_TYPE_MATRICES:
            raise ConfigError(f"unknown host type {htype!r}; known: {sorted(HOST_TYPE_MATRICES)}")
        matrix = parse_topo_matrix(HOST_TYPE_MATRICES[htype])
        hosts.append(HostSpec(idx, htype, len(matrix), matrix, uplinks[idx]))
    total = sum(h.gpu_count for h in hosts)
    available = frozenset(range(total))
    if unavailable_frac > 0:
        rng = np.random.default_rng([seed, 0xA7A1])
        for _ in range(1000):
            mask = rng.random(total) >= unavailable_frac
            if int(mask.sum()) >= 2:
                available = frozenset(int(g) for g in np.flatnonzero(mask))
                break
    return ClusterTopology(tuple(hosts), available, seed)
