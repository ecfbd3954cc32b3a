"""Bidirectional subset search over an abstract bandwidth functional.

Two complementary passes: a top-down removal search (confined to a single
host via exact table lookups whenever some host can satisfy the whole
request) and a bottom-up growth search seeded by the exact best pair. The
better-scoring result wins, ties going to the top-down branch.

Inside :func:`bidirectional_tree_search` the growth rounds screen candidates
per host using the exact intra-host tables and spend one bandwidth call per
candidate host rather than one per GPU. Under the min-composition bandwidth
model the screened round picks a set with the same bandwidth as the full
scan, and it keeps the total number of bandwidth calls within N^2 + N for
any request size. The standalone :func:`bottom_up` keeps the literal
evaluate-every-GPU loop.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from itertools import combinations
from typing import TYPE_CHECKING, Callable, Mapping

from .topology import ClusterTopology, mask_of, split_by_host

if TYPE_CHECKING:  # pragma: no cover
    from .dataspace import IntraHostTable


class InsufficientGpusError(ValueError):
    """Raised when a request asks for more GPUs than are available."""


class CountingBandwidth:
    """Wrap a bandwidth callable with a thread-safe invocation counter."""

    def __init__(self, fn: Callable[[frozenset[int]], float]):
        self._fn = fn
        self._calls = 0
        self._lock = threading.Lock()

    def __call__(self, s: frozenset[int]) -> float:
        with self._lock:
            self._calls += 1
        return self._fn(s)

    evaluate = __call__

    @property
    def calls(self) -> int:
        with self._lock:
            return self._calls


@dataclass(frozen=True)
class SearchResult:
    chosen: frozenset[int]
    predicted_bw: float
    branch: str  # "top_down" | "bottom_up"
    bw_calls: int
    elapsed: float  # seconds


def best_pair(available, bw) -> frozenset[int]:
    """Exact argmax over all pairs; ties go to the lexicographically smallest."""
    pair, _ = _best_pair_value(available, bw)
    return pair


def _best_pair_value(available, bw) -> tuple[frozenset[int], float]:
    ids = sorted(available)
    if len(ids) < 2:
        raise InsufficientGpusError(f"need at least 2 available GPUs, have {len(ids)}")
    best, best_bw = None, float("-inf")
    for a, b in combinations(ids, 2):
        v = bw(frozenset((a, b)))
        if v > best_bw:
            best, best_bw = frozenset((a, b)), v
    return best, best_bw


def bottom_up(available, k: int, bw) -> frozenset[int]:
    """Grow from the best pair, adding the highest-bandwidth GPU each round.

    Every remaining GPU is evaluated each round; ties go to the smallest id,
    and the best candidate is added even when no candidate strictly improves
    on the current set (the growth must reach size k).
    """
    _check_k(available, k)
    cur, _ = _best_pair_value(available, bw)
    remaining = set(available) - cur
    while len(cur) < k:
        best_g, best_bw = None, float("-inf")
        for g in sorted(remaining):
            v = bw(cur | {g})
            if v > best_bw:
                best_g, best_bw = g, v
        cur = cur | {best_g}
        remaining.discard(best_g)
    return cur


def _check_k(available, k: int) -> None:
    if k < 2:
        raise ValueError(f"growth/removal search needs k >= 2, got {k}")
    if k > len(available):
        raise InsufficientGpusError(f"requested {k} GPUs but only {len(available)} are available")


def insertion_tree_search(
    available,
    k: int,
    bw,
    topo: ClusterTopology,
    tables: Mapping[int, "IntraHostTable"],
) -> frozenset[int]:
    """Top-down search with the single-host shortcut.

    If any host holds at least k available GPUs, the best k-subset of every
    such host is read exactly from its table (the per-host dictionaries are
    exhaustive, so no removal walk or bandwidth call is needed) and the best
    per-host result wins. Otherwise the removal loop runs from the full
    available set through ``bw``.
    """
    chosen, _ = _insertion_search(available, k, bw, topo, tables)
    return chosen


def _insertion_search(available, k, bw, topo, tables) -> tuple[frozenset[int], float | None]:
    _check_k(available, k)
    available = frozenset(available)
    parts = split_by_host(topo, available)
    rich = [(h, local) for h, local in parts if len(local) >= k]
    if rich:
        best_set, best_bw = None, float("-inf")
        for host_id, local in rich:
            mask, v = tables[host_id].best_subset(k, mask_of(local))
            if v > best_bw:
                best_bw = v
                best_set = frozenset(topo.global_id(host_id, g) for g in _bits(mask))
        return best_set, best_bw
    cur = set(available)
    cur_bw: float | None = None
    while len(cur) > k:
        drop_g, drop_bw = None, float("-inf")
        for g in sorted(cur):
            v = bw(frozenset(cur - {g}))
            if v > drop_bw:
                drop_g, drop_bw = g, v
        cur.discard(drop_g)
        cur_bw = drop_bw
    return frozenset(cur), cur_bw


def _bits(mask: int):
    i = 0
    while mask:
        if mask & 1:
            yield i
        mask >>= 1
        i += 1


def _extension_profile(table, base: int, avail_mask: int) -> tuple[float, ...]:
    """Best table value per growth depth for supersets of ``base``.

    Breaks ties between equal-value candidates in the same host: a fresh
    host's GPUs all share the singleton value, but differ in how well the
    host's subsets containing them hold up as the selection keeps growing.
    """
    size0 = bin(base).count("1")
    best: dict[int, float] = {}
    for mask, bw in table.entries.items():
        if mask & base == base and mask & ~avail_mask == 0 and mask != base:
            c = bin(mask).count("1")
            if bw > best.get(c, float("-inf")):
                best[c] = bw
    return tuple(best.get(c, float("-inf")) for c in range(size0 + 1, size0 + 1 + len(best)))


def _screened_growth(
    available,
    k: int,
    bw,
    topo: ClusterTopology,
    tables: Mapping[int, "IntraHostTable"],
) -> tuple[frozenset[int], float]:
    """Bottom-up growth that screens same-host candidates via exact tables.

    Per round each host nominates the GPU maximizing its projected table
    value (adding a GPU can only change the overall bandwidth through that
    host's intra term, which is monotone under min-composition), so only one
    candidate per host needs a bandwidth call. Single-host extensions read
    the table directly, which agrees with ``bw`` on single-host sets.
    """
    cur, cur_bw = _best_pair_value(available, bw)
    remaining = set(available) - cur
    while len(cur) < k:
        by_host: dict[int, list[int]] = {}
        for g in remaining:
            by_host.setdefault(topo.host_of(g)[0], []).append(g)
        proj = {h: mask_of(local) for h, local in split_by_host(topo, frozenset(cur))}
        reps = []
        for host_id in sorted(by_host):
            table = tables[host_id]
            base = proj.get(host_id, 0)
            locals_here = sorted(topo.host_of(g)[1] for g in by_host[host_id])
            avail_mask = base | mask_of(locals_here)
            rep_local, rep_key = None, None
            for g in locals_here:
                grown = base | (1 << g)
                key = (table.entries[grown], _extension_profile(table, grown, avail_mask))
                if rep_key is None or key > rep_key:
                    rep_local, rep_key = g, key
            reps.append((topo.global_id(host_id, rep_local), rep_key[0], host_id, base))
        best_g, best_bw = None, float("-inf")
        single_host = len(proj) == 1
        for rep, rep_val, host_id, base in sorted(reps):
            if single_host and host_id in proj:
                v = rep_val  # cur + rep stays single-host: exact table value
            else:
                v = bw(frozenset(cur | {rep}))
            if v > best_bw:
                best_g, best_bw = rep, v
        cur = cur | {best_g}
        cur_bw = best_bw
        remaining.discard(best_g)
    return frozenset(cur), cur_bw


def bidirectional_tree_search(
    available,
    k: int,
    bw,
    topo: ClusterTopology,
    tables: Mapping[int, "IntraHostTable"],
) -> SearchResult:
    """Run both search directions and return the better result.

    Ties favor the top-down branch. ``bw`` may be any callable; calls are
    counted through a :class:`CountingBandwidth` wrapper and reported in the
    result.
    """
    available = frozenset(available)
    counting = bw if isinstance(bw, CountingBandwidth) else CountingBandwidth(bw)
    calls_before = counting.calls
    t0 = time.perf_counter()
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > len(available):
        raise InsufficientGpusError(f"requested {k} GPUs but only {len(available)} are available")
    if k == 1:
        best_g, best_bw = None, float("-inf")
        for g in sorted(available):
            host_id, local = topo.host_of(g)
            v = tables[host_id].entries[1 << local]
            if v > best_bw:
                best_g, best_bw = g, v
        chosen, value, branch = frozenset({best_g}), best_bw, "top_down"
    elif k == len(available):
        chosen, value, branch = available, counting(available), "top_down"
    else:
        c_td, v_td = _insertion_search(available, k, counting, topo, tables)
        if v_td is None:
            v_td = counting(c_td)
        c_bu, v_bu = _screened_growth(available, k, counting, topo, tables)
        if v_td >= v_bu:
            chosen, value, branch = c_td, v_td, "top_down"
        else:
            chosen, value, branch = c_bu, v_bu, "bottom_up"
    elapsed = time.perf_counter() - t0
    return SearchResult(chosen, value, branch, counting.calls - calls_before, elapsed)
