"""
Arm geometry and inverse dynamics
=================================

Load the shipped arm, walk the kinematic chain, and evaluate joint torques
for the planted link parameters.
"""

# %%
import numpy as np

from hydrarm import testbed
from hydrarm.dynamics import inverse_dynamics, mass_matrix, regressor
from hydrarm.model import JointState, default_model, forward_kinematics, validate_state

model = default_model()
for i, row in enumerate(model.dh_rows):
    print(f"row {i}: a={row.a:.5f} m  alpha={np.degrees(row.alpha):6.1f} deg  "
          f"offset={np.degrees(row.theta_offset):6.1f} deg")

# %%
# Tip position at the home pose and at a bent pose.
for q in (np.zeros(6), np.array([0.5, 0.1, -0.3, 0.2, 0.1, -0.2])):
    tip = forward_kinematics(model, q)[-1][:3, 3]
    print("q =", q, "-> tip", np.round(tip, 4))

# %%
# The state checker lists every bound that is exceeded.
s = JointState(np.zeros(6), np.array([0.3, 0, 0, 0, 0, 0]), np.zeros(6))
print(validate_state(model, s))

# %%
# Torques for a moving state, and the same torques through the regressor.
X = testbed.ground_truth_links(model)
s = JointState(np.array([0.4, 0.0, -0.2, 0.1, 0.0, 0.1]),
               np.array([0.1, -0.1, 0.2, 0.1, -0.3, 0.2]),
               np.array([0.05, 0.02, -0.1, 0.1, 0.2, -0.1]))
tau = inverse_dynamics(model, X, s)
print("tau      =", np.round(tau, 3))
print("Y @ X    =", np.round(regressor(model, s) @ X.vec(), 3))

# %%
M = mass_matrix(model, X, s.q)
print("inertia matrix eigenvalues:", np.round(np.linalg.eigvalsh(M), 4))
