"""Optimal-bandwidth references for scoring dispatch quality.

Exhaustive enumeration for small instances, and a pruned composition search
that is exact under the simulator's min-composition bandwidth: once the
per-host count is fixed, the best GPUs within each host can be chosen
independently, so enumerating count distributions over hosts covers the
optimum.
"""

from __future__ import annotations

import math
from itertools import combinations
from typing import Mapping

from .dataspace import IntraHostTable
from .search import InsufficientGpusError
from .simbw import GroundTruth
from .topology import ClusterTopology, ids_of, mask_of, split_by_host

BRUTE_FORCE_GUARD = 10_000_000


class BruteForceGuardError(ValueError):
    """Raised when the exhaustive search space exceeds the guard."""


def brute_force_optimal(gt: GroundTruth, available, k: int) -> tuple[frozenset[int], float]:
    """Exact argmax over all k-subsets; ties go to the lexicographically smallest."""
    ids = sorted(available)
    if k < 1 or k > len(ids):
        raise InsufficientGpusError(f"requested {k} GPUs but only {len(ids)} are available")
    count = math.comb(len(ids), k)
    if count > BRUTE_FORCE_GUARD:
        raise BruteForceGuardError(
            f"C({len(ids)},{k}) = {count} subsets exceeds the {BRUTE_FORCE_GUARD} guard"
        )
    best, best_bw = None, float("-inf")
    for combo in combinations(ids, k):
        v = gt._effective_value(combo)
        if v > best_bw:
            best, best_bw = frozenset(combo), v
    return best, best_bw


def pruned_greedy_optimal(
    source: GroundTruth | Mapping[int, IntraHostTable],
    topo: ClusterTopology,
    available,
    k: int,
    prune: bool = True,
) -> tuple[frozenset[int], float]:
    """Optimal k-set via per-host precomputation + count-composition search.

    ``source`` is either the simulator (ground-truth mode) or exact per-host
    tables (measurement-import mode); both expose the same intra values. A
    partial composition is abandoned once its running minimum cannot beat the
    best complete candidate; ``prune=False`` disables that for equivalence
    checks.
    """
    available = frozenset(available)
    if k < 1 or k > len(available):
        raise InsufficientGpusError(f"requested {k} GPUs but only {len(available)} are available")

    if isinstance(source, GroundTruth):
        def intra(host_id: int, mask: int) -> float:
            return source._intra_value(host_id, mask)
    else:
        def intra(host_id: int, mask: int) -> float:
            return source[host_id].entries[mask]

    # Best c-subset per host over its available GPUs, for every feasible c.
    parts = split_by_host(topo, available)
    per_host: list[tuple[int, dict[int, tuple[float, int]]]] = []
    for host_id, local in parts:
        locals_sorted = sorted(local)
        best_c: dict[int, tuple[float, int]] = {}
        for c in range(1, len(locals_sorted) + 1):
            bw_best, mask_best = float("-inf"), 0
            for combo in combinations(locals_sorted, c):
                mask = mask_of(combo)
                v = intra(host_id, mask)
                if v > bw_best:
                    bw_best, mask_best = v, mask
            best_c[c] = (bw_best, mask_best)
        per_host.append((host_id, best_c))

    # Widest hosts first: the single-host candidate seeds the prune bound.
    per_host.sort(key=lambda item: (-len(item[1]), item[0]))
    suffix_cap = [0] * (len(per_host) + 1)
    for i in range(len(per_host) - 1, -1, -1):
        suffix_cap[i] = suffix_cap[i + 1] + len(per_host[i][1])

    best_bw = float("-inf")
    best_pick: list[tuple[int, int]] = []
    for host_id, best_c in per_host:
        if k in best_c and best_c[k][0] > best_bw:
            best_bw = best_c[k][0]
            best_pick = [(host_id, best_c[k][1])]

    pick: list[tuple[int, int, float]] = []  # (host_id, mask, contribution)

    def dfs(idx: int, remaining: int, running: float) -> None:
        nonlocal best_bw, best_pick
        if remaining == 0:
            if len(pick) >= 2 and running > best_bw:
                best_bw = running
                best_pick = [(h, m) for h, m, _ in pick]
            return
        if idx == len(per_host) or remaining > suffix_cap[idx]:
            return
        if prune and len(pick) >= 1 and running <= best_bw:
            return
        host_id, best_c = per_host[idx]
        uplink = topo.hosts[host_id].uplink_gbps
        for c in range(min(remaining, len(best_c)), 0, -1):
            bw_c, mask_c = best_c[c]
            contrib = min(bw_c, uplink)
            pick.append((host_id, mask_c, contrib))
            dfs(idx + 1, remaining - c, min(running, contrib))
            pick.pop()
        dfs(idx + 1, remaining, running)

    dfs(0, k, float("inf"))
    chosen = frozenset(
        topo.global_id(h, g) for h, mask in best_pick for g in ids_of(mask)
    )
    return chosen, best_bw
