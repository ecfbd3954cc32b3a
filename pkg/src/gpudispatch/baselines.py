"""Reference dispatchers: index order, uniform random, and score-greedy.

The topology-aware baseline sees only static link grades, never measured or
predicted bandwidth; that blindness is the point of comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .search import InsufficientGpusError
from .topology import ClusterTopology, LinkType

DEFAULT_LINK_SCORES: dict[LinkType, int] = {
    LinkType.SYS: 1,
    LinkType.PXB: 2,
    LinkType.PIX: 3,
    LinkType.NV1: 4,
    LinkType.NV2: 5,
    LinkType.NV4: 6,
    LinkType.NV8: 7,
    LinkType.NV16: 8,
}


@dataclass(frozen=True)
class LinkScoreTable:
    """Ordinal score per link grade; cross-host pairs always score 0."""

    scores: dict[LinkType, int] = field(default_factory=lambda: dict(DEFAULT_LINK_SCORES))

    def __post_init__(self):
        order = [LinkType.SYS, LinkType.PXB, LinkType.PIX, LinkType.NV1,
                 LinkType.NV2, LinkType.NV4, LinkType.NV8, LinkType.NV16]
        values = [self.scores[t] for t in order]
        if any(a >= b for a, b in zip(values, values[1:])):
            raise ValueError("link scores must strictly increase with link grade")

    def pair_score(self, topo: ClusterTopology, a: int, b: int) -> int:
        host_a, local_a = topo.host_of(a)
        host_b, local_b = topo.host_of(b)
        if host_a != host_b:
            return 0
        return self.scores[topo.hosts[host_a].link(local_a, local_b)]


def _check(available, k: int) -> None:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > len(available):
        raise InsufficientGpusError(f"requested {k} GPUs but only {len(available)} are available")


def default_dispatch(available, k: int) -> frozenset[int]:
    """The k smallest available global ids (the proximity heuristic)."""
    _check(available, k)
    return frozenset(sorted(available)[:k])


def random_dispatch(available, k: int, seed) -> frozenset[int]:
    """Uniform k-subset, deterministic per seed."""
    _check(available, k)
    rng = np.random.default_rng(seed)
    picked = rng.choice(sorted(available), size=k, replace=False)
    return frozenset(int(g) for g in picked)


def topo_aware_dispatch(
    topo: ClusterTopology,
    available,
    k: int,
    scores: LinkScoreTable | None = None,
    stats: dict | None = None,
) -> frozenset[int]:
    """Greedy growth on cumulative link scores from the best-scoring pair.

    ``stats`` (optional) accumulates ``score_evals`` for overhead accounting.
    """
    _check(available, k)
    scores = scores or LinkScoreTable()
    ids = sorted(available)
    evals = 0
    if k == 1:
        chosen = frozenset({ids[0]})
    else:
        best, best_score = None, -1
        for a, b in combinations(ids, 2):
            s = scores.pair_score(topo, a, b)
            evals += 1
            if s > best_score:
                best, best_score = (a, b), s
        cur = set(best)
        remaining = [g for g in ids if g not in cur]
        while len(cur) < k:
            best_g, best_gain = None, -1
            for g in remaining:
                gain = sum(scores.pair_score(topo, c, g) for c in cur)
                evals += len(cur)
                if gain > best_gain:
                    best_g, best_gain = g, gain
            cur.add(best_g)
            remaining.remove(best_g)
        chosen = frozenset(cur)
    if stats is not None:
        stats["score_evals"] = stats.get("score_evals", 0) + evals
    return chosen
