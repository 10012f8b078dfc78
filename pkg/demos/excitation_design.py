"""
Excitation trajectory design
============================

Search for a band-limited joint trajectory that keeps the identification
problem well conditioned while respecting the joint limits.
"""

# %%
import numpy as np

from hydrarm.excitation import (check_constraints, condition_number, optimize_trajectory,
                                random_feasible_trajectory, table3_trajectory)
from hydrarm.model import default_model
from hydrarm.reduction import reduce_model

model = default_model()
mapping = reduce_model(model)

# %%
# The stored coefficient set, checked against the limits.
preset = table3_trajectory()
rep = check_constraints(preset, model.limits)
print("preset feasible:", rep.feasible, "worst ratios:", rep.max_ratio)
print("preset kappa:", condition_number(model, mapping, preset))

# %%
baseline = [condition_number(model, mapping, random_feasible_trajectory(model, np.random.default_rng(s)))
            for s in range(20)]
print("random feasible kappa median:", np.median(baseline))

# %%
res = optimize_trajectory(model, mapping, seed=0, budget=600)
print("optimised kappa:", res.kappa, "feasible:", res.report.feasible)
print(f"{res.n_params_full} coefficients, {res.n_params_free} left after the start conditions")
