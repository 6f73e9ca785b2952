"""
BalanceMix versus plain BCE under 40% random flips
==================================================

Both trainers see the same noisy training split; validation labels are clean.
"""

from balancemix import datagen as dg
from balancemix.trainer import TrainConfig, train

train_set, valset = dg.standard_benchmark(seed=0, noise="flip", tau=0.4)

for mode in ("bce_baseline", "balancemix"):
    result = train(TrainConfig(seed=0, mode=mode), train_set, valset)
    m = result.reports[-1].metrics
    print("%-12s  all %.3f  many %.3f  medium %.3f  few %.3f"
          % (mode, m["map_all"], m["map_many"], m["map_medium"], m["map_few"]))
    if mode == "balancemix":
        print("final tag counts:", result.reports[-1].counts)
