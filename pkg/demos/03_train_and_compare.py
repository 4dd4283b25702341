"""End-to-end: generate a small mixture dataset, train with and without the
reservoir, and compare the normalized squared-error metric.

Desk-scale version of the full experiment (256 samples, 100 trees); the CLI
runs the full-size protocols, e.g.:

    g2qrc train-eval --config my_config.json --out results/
"""

import math
import time

from g2qrc.experiments import (
    BASELINE,
    WITH_RESERVOIR,
    SplitSpec,
    generate_dataset,
    train_and_eval,
)
from g2qrc.forest import ForestConfig
from g2qrc.reservoir import ReservoirConfig
from g2qrc.sources import CV_MIXTURE, SweepSpec

t0 = time.time()
sweep = SweepSpec("random", {"theta": (0.0, math.pi / 2),
                             "phi": (0.0, math.pi / 2)}, 256)
dataset = generate_dataset(CV_MIXTURE, sweep, ReservoirConfig(seed=7), seed=123)
print(f"generated {len(dataset)} samples in {time.time() - t0:.0f}s "
      f"(reservoir fingerprint {dataset.reservoir_fingerprint})")

forest = ForestConfig(n_trees=100, seed=5)
split = SplitSpec(test_fraction=0.25, seed=11)
with_res = train_and_eval(dataset, WITH_RESERVOIR, forest, split)
baseline = train_and_eval(dataset, BASELINE, forest, split)

print(f"\nmetric with reservoir : {with_res.mse:.5f}")
print(f"metric baseline       : {baseline.mse:.5f}")
print(f"improvement factor    : {baseline.mse / with_res.mse:.1f}x")
print("\nsample predictions (id, truth, prediction):")
for row in with_res.per_sample[:8]:
    print(f"  {row[0]:4d}  {row[1]:.4f}  {row[2]:.4f}")
