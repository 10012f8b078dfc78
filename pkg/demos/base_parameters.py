"""
Base inertial parameters
========================

Numerically regroup the 78 link parameters into the identifiable set and
check that nothing is lost in the torque prediction.
"""

# %%
import numpy as np

from hydrarm import testbed
from hydrarm.dynamics import rnea_batch
from hydrarm.model import default_model
from hydrarm.reduction import (base_regressor_batch, project_params, rank_report,
                               reduce_model, sample_states)

model = default_model()
mapping = reduce_model(model)
print("rank:", mapping.rank)
for k, label in enumerate(mapping.labels, 1):
    print(f"{k:2d}  {label}")

# %%
# The rank does not depend on the sample draw or the tolerance.
print(rank_report(model))
print("with friction columns:", reduce_model(model, include_friction=True).rank)

# %%
X = testbed.ground_truth_links(model).without_friction()
q, dq, ddq = sample_states(model, 100, np.random.default_rng(0))
full = rnea_batch(model, X.values, q, dq, ddq)
base = base_regressor_batch(model, mapping, q, dq, ddq) @ project_params(mapping, X)
print("max relative difference:", np.abs(base - full).max() / np.abs(full).max())
