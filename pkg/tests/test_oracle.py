import numpy as np
import pytest

from conftest import quiet_speeds, random_small_cluster, tables_by_host
from gpudispatch.oracle import (
    BruteForceGuardError,
    brute_force_optimal,
    pruned_greedy_optimal,
)
from gpudispatch.search import InsufficientGpusError
from gpudispatch.simbw import GroundTruth, LinkSpeedTable
from gpudispatch.topology import make_cluster


def test_brute_force_finds_nvlink_pair():
    topo = make_cluster(["A6000"], "uniform:20", seed=0)
    gt = GroundTruth(topo, quiet_speeds())
    chosen, bw = brute_force_optimal(gt, topo.available, 2)
    assert bw == 80.0
    assert chosen == frozenset({0, 1})  # lexicographically smallest NV4 pair


def test_brute_force_full_set():
    topo = make_cluster(["V100"], "uniform:20", seed=0)
    gt = GroundTruth(topo, quiet_speeds())
    chosen, bw = brute_force_optimal(gt, topo.available, 8)
    assert chosen == frozenset(range(8))
    assert bw == gt._effective_value(range(8))


def test_brute_force_guard():
    topo = make_cluster(["A800"] * 4, "uniform:20", seed=0)
    gt = GroundTruth(topo)
    with pytest.raises(BruteForceGuardError, match="155117520"):
        brute_force_optimal(gt, range(30), 15)


def test_pruned_matches_brute_force_on_random_clusters():
    for seed in range(40):
        topo = random_small_cluster(seed)
        sigma = 0.5 if seed % 3 == 0 else 0.0
        gt = GroundTruth(topo, LinkSpeedTable(noise_sigma=sigma))
        for k in range(2, topo.num_gpus + 1):
            _, want = brute_force_optimal(gt, topo.available, k)
            _, got = pruned_greedy_optimal(gt, topo, topo.available, k)
            assert got == want, (seed, k)


def test_pruned_single_host_equals_table_argmax():
    topo = make_cluster(["V100"], "uniform:20", seed=0)
    gt = GroundTruth(topo, quiet_speeds())
    tables = tables_by_host(gt)
    for k in range(1, 9):
        _, bw = pruned_greedy_optimal(gt, topo, topo.available, k)
        want = max(v for m, v in tables[0].entries.items() if bin(m).count("1") == k)
        assert bw == want


def test_pruned_insufficient():
    topo = make_cluster(["A800"] * 4, "uniform:20", seed=0)
    gt = GroundTruth(topo)
    with pytest.raises(InsufficientGpusError):
        pruned_greedy_optimal(gt, topo, topo.available, 64)


def test_pruning_soundness():
    for seed in range(15):
        topo = random_small_cluster(seed, tag=0xBEE)
        gt = GroundTruth(topo)
        for k in range(2, topo.num_gpus + 1, 2):
            _, a = pruned_greedy_optimal(gt, topo, topo.available, k, prune=True)
            _, b = pruned_greedy_optimal(gt, topo, topo.available, k, prune=False)
            assert a == b


def test_pruned_tables_mode_matches_ground_truth_mode():
    topo = make_cluster(["4090", "A6000", "A800"], "random:20-40", seed=6, unavailable_frac=0.2)
    gt = GroundTruth(topo)
    tables = tables_by_host(gt)
    for k in range(2, len(topo.available) + 1, 3):
        _, a = pruned_greedy_optimal(gt, topo, topo.available, k)
        _, b = pruned_greedy_optimal(tables, topo, topo.available, k)
        assert a == b


def test_pruned_respects_availability():
    topo = make_cluster(["A6000", "A800"], "uniform:30", seed=3, unavailable_frac=0.4)
    gt = GroundTruth(topo)
    for k in (2, 3, len(topo.available)):
        chosen, _ = pruned_greedy_optimal(gt, topo, topo.available, k)
        assert chosen <= topo.available
        assert len(chosen) == k


def test_oracle_dominates_any_selection():
    rng = np.random.default_rng(0)
    topo = make_cluster(["4090", "V100", "A800"], "random:20-40", seed=4)
    gt = GroundTruth(topo)
    for _ in range(60):
        k = int(rng.integers(2, 12))
        s = frozenset(int(g) for g in rng.choice(24, size=k, replace=False))
        _, opt = pruned_greedy_optimal(gt, topo, topo.available, k)
        assert gt._effective_value(s) <= opt
