import numpy as np
import pytest

from conftest import quiet_speeds, random_small_cluster, tables_by_host
from gpudispatch.dataspace import IntraHostTable
from gpudispatch.oracle import brute_force_optimal
from gpudispatch.search import (
    CountingBandwidth,
    InsufficientGpusError,
    best_pair,
    bidirectional_tree_search,
    bottom_up,
    insertion_tree_search,
)
from gpudispatch.simbw import GroundTruth
from gpudispatch.topology import ClusterTopology, HostSpec, make_cluster, parse_topo_matrix


def flat_host_topo(n=8):
    matrix = parse_topo_matrix(
        "\n".join(" ".join("X" if i == j else "NV1" for j in range(n)) for i in range(n))
    )
    host = HostSpec(0, "flat", n, matrix, 30.0)
    return ClusterTopology((host,), frozenset(range(n)))


def table_instance(seed, n=8):
    """Synthetic single-host instance with independent subset values."""
    rng = np.random.default_rng([seed, 0xADE])
    entries = {m: float(rng.uniform(5, 50)) for m in range(1, 1 << n)}
    table = IntraHostTable(0, n, entries)

    def bw(s):
        return entries[sum(1 << g for g in s)]

    return flat_host_topo(n), table, entries, bw


def brute_best(entries, k):
    return max(v for m, v in entries.items() if bin(m).count("1") == k)


# ---------------------------------------------------------------------------
# best_pair


def test_best_pair_tie_breaks_lexicographic():
    fn = CountingBandwidth(lambda s: 7.0)
    assert best_pair(range(6), fn) == frozenset({0, 1})


def test_best_pair_finds_nvlink_pair():
    topo = make_cluster(["A6000"], "uniform:20", seed=0)
    gt = GroundTruth(topo, quiet_speeds())
    assert best_pair(topo.available, gt.effective_bandwidth) == frozenset({0, 1})


def test_best_pair_two_available_single_call():
    fn = CountingBandwidth(lambda s: 5.0)
    assert best_pair({3, 7}, fn) == frozenset({3, 7})
    assert fn.calls == 1
    with pytest.raises(InsufficientGpusError):
        best_pair({3}, fn)


# ---------------------------------------------------------------------------
# bottom_up


def test_bottom_up_k2_equals_best_pair():
    _, _, entries, bw = table_instance(11)
    assert bottom_up(range(8), 2, bw) == best_pair(range(8), bw)


def test_bottom_up_uniform_takes_smallest_ids():
    assert bottom_up(range(8), 5, lambda s: 1.0) == frozenset(range(5))


def test_bottom_up_forced_progress_on_plateau():
    # Adding any GPU lowers the value; the loop must still reach size k.
    def bw(s):
        return 100.0 - len(s)

    assert bottom_up(range(6), 4, bw) == frozenset(range(4))


def test_bottom_up_three_host_chain_matches_brute_force():
    topo = make_cluster(["A800", "V100", "A6000"], "random:20-40", seed=4)
    gt = GroundTruth(topo, quiet_speeds())
    chosen = bottom_up(topo.available, 3, gt.effective_bandwidth)
    _, opt = brute_force_optimal(gt, topo.available, 3)
    assert gt._effective_value(chosen) == opt


# ---------------------------------------------------------------------------
# insertion_tree_search


def test_insertion_confined_to_best_host():
    topo = make_cluster(["4090", "V100", "A6000", "A800"], "uniform:20", seed=0)
    gt = GroundTruth(topo, quiet_speeds())
    tables = tables_by_host(gt)
    fn = CountingBandwidth(gt._effective_value)
    chosen = insertion_tree_search(topo.available, 4, fn, topo, tables)
    assert fn.calls == 0  # exact table lookups only
    # per-host brute force over the 255-entry tables
    best = max(
        (max(v for m, v in tables[h].entries.items() if bin(m).count("1") == 4), h)
        for h in tables
    )
    got = tables[3] if chosen <= set(range(24, 32)) else None
    assert got is not None and best[1] == 3
    assert gt._effective_value(chosen) == best[0]


def test_insertion_k2_matches_table_argmax_pair():
    topo, table, entries, bw = table_instance(5)
    fn = CountingBandwidth(bw)
    chosen = insertion_tree_search(range(8), 2, fn, topo, {0: table})
    best = max(v for m, v in entries.items() if bin(m).count("1") == 2)
    assert entries[sum(1 << g for g in chosen)] == best
    assert fn.calls == 0


def test_full_top_down_call_count():
    # No host can satisfy k alone -> full removal loop through bw.
    topo = make_cluster(["A800", "A800"], "uniform:20", seed=0)
    gt = GroundTruth(topo, quiet_speeds())
    tables = tables_by_host(gt)
    n, k = 16, 10
    fn = CountingBandwidth(gt._effective_value)
    insertion_tree_search(range(n), k, fn, topo, tables)
    assert fn.calls == sum(range(k + 1, n + 1))


# ---------------------------------------------------------------------------
# bidirectional


def test_bidirectional_single_host_near_optimal():
    topo, table, entries, bw = table_instance(21, n=6)
    for k in range(2, 6):
        res = bidirectional_tree_search(range(6), k, bw, topo, {0: table})
        opt = brute_best(entries, k)
        assert bw(res.chosen) >= 0.95 * opt
        if k == 2:
            assert bw(res.chosen) == opt
        assert len(res.chosen) == k


def test_bidirectional_k_equals_n():
    topo, table, entries, bw = table_instance(30)
    fn = CountingBandwidth(bw)
    res = bidirectional_tree_search(range(8), 8, fn, topo, {0: table})
    assert res.chosen == frozenset(range(8))
    assert res.bw_calls == 1


def test_bidirectional_beats_each_branch_on_adversarial_instance():
    # Frozen instance where greedy growth is suboptimal but removal is exact.
    topo, table, entries, bw = table_instance(2)
    k = 3
    opt = brute_best(entries, k)
    bu = bottom_up(range(8), k, bw)
    td = insertion_tree_search(range(8), k, CountingBandwidth(bw), topo, {0: table})
    assert bw(bu) < opt
    assert bw(td) == opt
    res = bidirectional_tree_search(range(8), k, bw, topo, {0: table})
    assert res.predicted_bw == opt
    assert res.branch == "top_down"


def test_bidirectional_dominance_and_validity():
    for seed in range(30):
        topo = random_small_cluster(seed, tag=0xB1D)
        gt = GroundTruth(topo)
        tables = tables_by_host(gt)
        n = topo.num_gpus
        rng = np.random.default_rng([seed, 1])
        k = int(rng.integers(1, n + 1))
        res = bidirectional_tree_search(topo.available, k, gt._effective_value, topo, tables)
        assert len(res.chosen) == k
        assert res.chosen <= topo.available
        assert res.predicted_bw == gt._effective_value(res.chosen)
        assert res.branch in ("top_down", "bottom_up")


def test_bidirectional_call_bound():
    topo = make_cluster(["4090", "V100", "A6000", "A800"], "random:20-40", seed=3, unavailable_frac=0.2)
    gt = GroundTruth(topo)
    tables = tables_by_host(gt)
    n = len(topo.available)
    for k in range(1, n + 1):
        fn = CountingBandwidth(gt._effective_value)
        res = bidirectional_tree_search(topo.available, k, fn, topo, tables)
        assert res.bw_calls == fn.calls
        assert res.bw_calls <= n * n + n


def test_bidirectional_k2_returns_global_argmax_pair():
    topo = make_cluster(["4090", "A6000"], "random:20-40", seed=5)
    gt = GroundTruth(topo)
    tables = tables_by_host(gt)
    res = bidirectional_tree_search(topo.available, 2, gt._effective_value, topo, tables)
    _, opt = brute_force_optimal(gt, topo.available, 2)
    assert gt._effective_value(res.chosen) == opt


def test_k1_returns_best_singleton():
    topo, table, entries, bw = table_instance(9)
    res = bidirectional_tree_search(range(8), 1, bw, topo, {0: table})
    (g,) = res.chosen
    assert entries[1 << g] == max(entries[1 << i] for i in range(8))
    assert res.bw_calls == 0


def test_insufficient_gpus_rejected():
    topo, table, entries, bw = table_instance(9)
    with pytest.raises(InsufficientGpusError):
        bidirectional_tree_search(range(4), 5, bw, topo, {0: table})
    with pytest.raises(ValueError):
        bidirectional_tree_search(range(4), 0, bw, topo, {0: table})


def test_mean_ratio_to_brute_force():
    ratios = []
    for seed in range(200):
        topo = random_small_cluster(seed, max_n=10, tag=0xC2)
        gt = GroundTruth(topo)
        tables = tables_by_host(gt)
        rng = np.random.default_rng([seed, 0xD2])
        k = int(rng.integers(2, topo.num_gpus + 1))
        res = bidirectional_tree_search(topo.available, k, gt._effective_value, topo, tables)
        _, opt = brute_force_optimal(gt, topo.available, k)
        ratios.append(gt._effective_value(res.chosen) / opt)
    assert float(np.mean(ratios)) >= 0.95


def test_search_pure_over_snapshot():
    # Identical inputs give identical outputs, and the bandwidth callable
    # sees only sets drawn from the available pool.
    topo = make_cluster(["V100", "A6000"], "random:20-40", seed=8, unavailable_frac=0.25)
    gt = GroundTruth(topo)
    tables = tables_by_host(gt)
    seen = []

    def spy(s):
        seen.append(s)
        return gt._effective_value(s)

    res1 = bidirectional_tree_search(topo.available, 5, spy, topo, tables)
    res2 = bidirectional_tree_search(topo.available, 5, gt._effective_value, topo, tables)
    assert res1.chosen == res2.chosen
    assert all(s <= topo.available for s in seen)
