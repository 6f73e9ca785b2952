"""
Label-wise management
=====================

Per-class, per-polarity GMMs on the loss split labels into clean, re-labeled
and ambiguous ones.
"""

import numpy as np
from balancemix import datagen as dg
from balancemix import labelmgmt as lm
from balancemix.metrics import selection_metrics
from balancemix.trainer import TrainConfig, train

train_set, _ = dg.standard_benchmark(seed=0, noise="mislabel", tau=0.2)
net = train(TrainConfig(epochs=10, warmup_epochs=10), train_set).model

ledger, bank = lm.manage_labels(net, train_set.features.astype(float), train_set.observed_labels,
                                epsilon=0.975, rng=np.random.default_rng(0))
print("tag counts:", ledger.counts())

# the clean component sits at the low-loss mode
fit = bank.fits[0][1]
print("class 0 positives: means %s weights %s (%s)" % (np.round(fit.means, 3), np.round(fit.weights, 3), fit.status))

diag = selection_metrics(ledger, train_set.true_labels, train_set.observed_labels)
print("label precision %.3f  recall %.3f" % (diag.label_precision, diag.label_recall))
if diag.relabel_accuracy is not None:
    print("re-labeled %.2f%% of labels with accuracy %.3f" % (100 * diag.relabel_proportion, diag.relabel_accuracy))
