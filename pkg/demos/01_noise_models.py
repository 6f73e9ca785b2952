"""
The three label-noise models
============================

A clean synthetic multi-label set, then each noise model applied to it.
"""

import numpy as np
from balancemix import datagen as dg

# head/tail ratio 50 across 10 classes
cfg = dg.GeneratorConfig.for_imbalance(50, n=2000, d=32, k=10, separability=2.0)
clean = dg.generate(cfg)
print("positives per class:", clean.true_positive_counts)
print("CLS_Imb %.1f  PN_Imb %.1f" % (dg.cls_imbalance(clean.true_positive_counts), dg.pn_imbalance(clean)))

# mislabeling moves a positive to another class, favouring frequent classes
rho = dg.mislabel_transition(clean.true_positive_counts, 0.4)
print("\ntransition row of the rarest class:", np.round(rho[-1], 3))
print("row sums:", np.round(rho.sum(axis=1), 12))

for kind, tau in [("mislabel", 0.4), ("flip", 0.4), ("single_positive", 0.0)]:
    noisy = dg.inject_noise(clean, kind, tau, seed=1)
    wrong = (noisy.observed_labels != noisy.true_labels).mean()
    print("\n%-16s wrong labels %.3f" % (kind, wrong))
    print("  observed positives:", noisy.class_positive_counts)
