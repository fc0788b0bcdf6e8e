"""Train the MLP with several losses on a small synthetic set and compare."""
# %%
import numpy as np

from ordinal_extremes.experiment import BenchmarkConfig, generate_synthetic, prepare_splits, run_benchmark
from ordinal_extremes.mlp import OptimConfig

data = generate_synthetic(n=3000, d=8, zero_fraction=0.7, seed=11)
print("class histogram:", data.class_histogram())
splits, prune_log = prepare_splits(data, (1, 4), (5, 5), (6, 7))
print("train/val/test sizes:", len(splits.train), len(splits.val), len(splits.test))

# %%
# small network, three keep ratios for the no-event class
cfg = BenchmarkConfig(ratios=(0.3, 0.6, 1.0), hidden1=32, hidden2=32, embed=16,
                      optim=OptimConfig(max_epochs=60, patience=10))
result = run_benchmark(splits, ["ce", "wkloss", "tdegpd"], [0, 1], cfg)

# %%
for loss, stats in result.summary().items():
    g = stats["global"]
    print(f"{loss:7s} iou {g['iou_macro']['mean']:.3f}  "
          f"extreme iou {g['iou_extreme']['mean']:.3f}  "
          f"extreme distance {g['extreme_distance']['mean']:.3f}  "
          f"ratios {stats['selected_ratios']}")

# %%
# confusion matrix of one selected model on the test periods
s = result.selection("wkloss", 0)
print(np.array(s.test_report.confusion))
