"""Tour of the cluster model and the synthetic bandwidth oracle.

Builds a four-host heterogeneous cluster, inspects link matrices, and shows
how effective bandwidth composes across hosts via the bottleneck rule.
"""

from gpudispatch import GroundTruth, LinkSpeedTable, make_cluster, serialize_cluster_config

topo = make_cluster(["4090", "V100", "A6000", "A800"], "random:20-40", seed=1)
print(f"cluster: {topo.num_gpus} GPUs on {len(topo.hosts)} hosts")
for host in topo.hosts:
    print(f"  host {host.host_id} ({host.host_type}): uplink {host.uplink_gbps:.1f} GB/s")

print("\nA6000 link matrix (host 2):")
for row in topo.hosts[2].link_matrix:
    print("   ", " ".join(f"{t.token:>4}" for t in row))

gt = GroundTruth(topo)
print("\nintra-host pairs (GB/s):")
print(f"  A800 NVSwitch pair {{24,25}}: {gt.effective_bandwidth({24, 25}):7.2f}")
print(f"  A6000 NVLink pair  {{16,17}}: {gt.effective_bandwidth({16, 17}):7.2f}")
print(f"  A6000 cross-quad   {{16,20}}: {gt.effective_bandwidth({16, 20}):7.2f}")

print("\nanti-locality on the 4090 host (seeded per-pair jitter):")
for pair in ((0, 3), (2, 3)):
    print(f"  pair {pair}: {gt.intra_host_bandwidth(0, set(pair)):6.2f}  "
          f"(tokens {topo.hosts[0].link(*pair).token})")

print("\ncross-host composition is a minimum over parts:")
s = {24, 25, 26, 8, 9}  # three A800 GPUs + a V100 pair
for host_id, label in ((3, "A800 triple"), (1, "V100 pair")):
    print(f"  uplink host {host_id}: {topo.hosts[host_id].uplink_gbps:6.2f}")
print(f"  A800 triple intra : {gt.intra_host_bandwidth(3, {0, 1, 2}):6.2f}")
print(f"  V100 pair intra   : {gt.intra_host_bandwidth(1, {0, 1}):6.2f}")
print(f"  => effective({sorted(s)}) = {gt.effective_bandwidth(s):.2f}")

print("\nthe same cluster serializes to a YAML document:")
print("\n".join(serialize_cluster_config(topo).splitlines()[:8]) + "\n  ...")

print("\nquiet (noise- and jitter-free) speeds are available for exact math:")
quiet = LinkSpeedTable(noise_sigma=0.0, anti_locality=None)
gt_quiet = GroundTruth(topo, quiet)
print(f"  4090 PIX pair {{2,3}} without jitter: {gt_quiet.intra_host_bandwidth(0, {2, 3}):.2f}")
