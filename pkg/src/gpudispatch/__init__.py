"""Bandwidth-aware GPU dispatching over simulated heterogeneous clusters."""

from .baselines import LinkScoreTable, default_dispatch, random_dispatch, topo_aware_dispatch
from .dataspace import (
    DataSpace,
    DataSpaceError,
    IntraHostTable,
    ReplayBuffer,
    build_dataspace,
    load_dataspace,
    save_dataspace,
)
from .evalharness import (
    ExperimentConfig,
    GbeReport,
    gbe,
    overhead_report,
    run_experiment,
    write_per_k_csv,
    write_report_csv,
)
from .oracle import BruteForceGuardError, brute_force_optimal, pruned_greedy_optimal
from .predictor import (
    PredictorModel,
    TrainConfig,
    featurize,
    gradient_check,
    init_model,
    load_model,
    predict,
    save_model,
    train_offline,
    update_online,
)
from .search import (
    CountingBandwidth,
    InsufficientGpusError,
    SearchResult,
    best_pair,
    bidirectional_tree_search,
    bottom_up,
    insertion_tree_search,
)
from .simbw import AntiLocality, GroundTruth, LinkSpeedTable, parse_measurement_log, tables_from_log
from .topology import (
    ClusterTopology,
    ConfigError,
    HostSpec,
    LinkType,
    UplinkSpec,
    make_cluster,
    parse_cluster_config,
    parse_topo_matrix,
    serialize_cluster_config,
    split_by_host,
)

__version__ = "0.1.0"
