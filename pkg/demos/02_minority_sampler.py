"""
Confidence-based minority sampling
==================================

Instances whose labels the model is least confident about get drawn most.
"""

import numpy as np
from balancemix import datagen as dg
from balancemix import model as mdl
from balancemix.sampling import SamplerState, draw_minority_batch, update_confidence_table
from balancemix.trainer import TrainConfig, train

train_set, _ = dg.standard_benchmark(seed=0)
x, y = train_set.features.astype(float), train_set.observed_labels

# a few epochs of plain training make the confidences meaningful
net = train(TrainConfig(epochs=5, warmup_epochs=5, mode="bce_baseline"), train_set).model
conf = mdl.forward(net, x)

table = update_confidence_table(conf, y)
print("presence confidence per class:", np.round(table.presence, 3))
print("absence confidence per class: ", np.round(table.absence, 3))

state = SamplerState.from_model_outputs(conf, y, epoch=5)
has_tail = y[:, -1] == 1
print("\nmean draw probability x N, instances with the rarest class: %.2f" % (state.probs[has_tail].mean() * len(y)))
print("mean draw probability x N, all other instances:            %.2f" % (state.probs[~has_tail].mean() * len(y)))

# the sampler draws i.i.d. with replacement
rng = np.random.default_rng(0)
batch = draw_minority_batch(state, 64, rng)
print("\nshare of a minority batch holding the rarest class: %.2f (dataset share %.2f)"
      % (has_tail[batch].mean(), has_tail.mean()))
