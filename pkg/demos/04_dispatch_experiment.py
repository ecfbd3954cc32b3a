"""A miniature dispatch-quality sweep.

Five dispatchers on a heterogeneous cluster, scored by ground truth against
the composition oracle. The full-scale equivalent runs through the CLI:
``gpudispatch evaluate --config <yaml> --out report.csv``.
"""

from gpudispatch import ExperimentConfig, run_experiment, write_per_k_csv, write_report_csv
from gpudispatch.predictor import TrainConfig

cfg = ExperimentConfig(
    host_types=("4090", "V100", "A6000", "A800"),
    uplink="random:20-40",
    unavailable_frac=0.2,
    seeds=(0, 1, 2),
    ks=(2, 4, 8, 12, 16, 20, 24),
    train_samples=600,
    train=TrainConfig(max_epochs=120, patience=20),
)
print("running 3 seeds x 7 request sizes x 5 dispatchers (trains one model per seed)...")
report = run_experiment(cfg)

print(f"\n{'k':>4}" + "".join(f"{a:>10}" for a in report.algorithms()))
by_algo = {a: report.mean_gbe_by_k(a) for a in report.algorithms()}
for k in cfg.ks:
    row = "".join(
        f"{by_algo[a][k]:>9.1f}%" if k in by_algo[a] else f"{'-':>10}" for a in report.algorithms()
    )
    print(f"{k:>4}{row}")

print("\nmean GPU bandwidth efficacy:")
for a in report.algorithms():
    print(f"  {a:>8}: {report.mean_gbe(a):5.1f}%")

write_report_csv(report, "demo_report.csv")
write_per_k_csv(report, "demo_report.per_k.csv")
print("\nwrote demo_report.csv and demo_report.per_k.csv")
