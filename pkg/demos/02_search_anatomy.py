"""Anatomy of the bidirectional subset search.

Runs both search directions against exact bandwidth on a 32-GPU cluster and
compares them with the composition oracle, including the call-count budget.
"""

from gpudispatch import (
    CountingBandwidth,
    GroundTruth,
    best_pair,
    bidirectional_tree_search,
    bottom_up,
    insertion_tree_search,
    make_cluster,
    pruned_greedy_optimal,
)

topo = make_cluster(["4090", "V100", "A6000", "A800"], "random:20-40", seed=5, unavailable_frac=0.2)
gt = GroundTruth(topo)
tables = {t.host_id: t for t in gt.enumerate_intra_tables()}
avail = topo.available
n = len(avail)
print(f"{n} of {topo.num_gpus} GPUs available")

fn = CountingBandwidth(gt._effective_value)
pair = best_pair(avail, fn)
print(f"\nbest pair: {sorted(pair)} at {gt._effective_value(pair):.1f} GB/s "
      f"({fn.calls} evaluations = C({n},2))")

k = 6
grown = bottom_up(avail, k, gt._effective_value)
confined = insertion_tree_search(avail, k, CountingBandwidth(gt._effective_value), topo, tables)
print(f"\nk={k}: growth picks {sorted(grown)} ({gt._effective_value(grown):.1f} GB/s)")
print(f"      insertion confines to one host: {sorted(confined)} "
      f"({gt._effective_value(confined):.1f} GB/s, zero bandwidth calls)")

print(f"\nfull sweep, both directions, against the oracle (bound N^2+N = {n * n + n}):")
print(f"{'k':>4} {'search':>8} {'optimal':>8} {'ratio':>6} {'branch':>10} {'calls':>6}")
for k in (2, 4, 8, 10, 12, 16, 20, n):
    result = bidirectional_tree_search(avail, k, gt._effective_value, topo, tables)
    achieved = gt._effective_value(result.chosen)
    _, optimal = pruned_greedy_optimal(gt, topo, avail, k)
    print(f"{k:>4} {achieved:>8.2f} {optimal:>8.2f} {achieved / optimal:>6.2f} "
          f"{result.branch:>10} {result.bw_calls:>6}")
