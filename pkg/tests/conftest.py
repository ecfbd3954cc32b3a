import numpy as np
import pytest

from gpudispatch.simbw import GroundTruth, LinkSpeedTable
from gpudispatch.topology import (
    HOST_TYPE_MATRICES,
    ClusterTopology,
    HostSpec,
    make_cluster,
    parse_topo_matrix,
)


def quiet_speeds(**kw) -> LinkSpeedTable:
    """Noise-free, perturbation-free speeds for exact-value tests."""
    kw.setdefault("noise_sigma", 0.0)
    kw.setdefault("anti_locality", None)
    return LinkSpeedTable(**kw)


def random_small_cluster(seed: int, max_n: int = 12, tag: int = 0xC1) -> ClusterTopology:
    """Mixed-type cluster of 1-4 GPU hosts, at most max_n GPUs total."""
    rng = np.random.default_rng([seed, tag])
    types = list(HOST_TYPE_MATRICES)
    hosts, total = [], 0
    for idx in range(int(rng.integers(2, 5))):
        g = min(int(rng.integers(1, 5)), max_n - total)
        if g < 1:
            break
        t = types[int(rng.integers(0, len(types)))]
        full = parse_topo_matrix(HOST_TYPE_MATRICES[t])
        sub = tuple(tuple(full[i][j] for j in range(g)) for i in range(g))
        hosts.append(HostSpec(idx, t, g, sub, float(rng.uniform(10, 50))))
        total += g
    return ClusterTopology(tuple(hosts), frozenset(range(total)), seed)


def tables_by_host(gt: GroundTruth) -> dict:
    return {t.host_id: t for t in gt.enumerate_intra_tables()}


@pytest.fixture
def two_host_topo() -> ClusterTopology:
    return make_cluster(["A800", "A800"], "uniform:40", seed=3)


@pytest.fixture
def hetero32() -> ClusterTopology:
    return make_cluster(["4090", "V100", "A6000", "A800"], "random:20-40", seed=1, unavailable_frac=0.2)
